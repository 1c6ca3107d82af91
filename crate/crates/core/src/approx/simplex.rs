//! Nelder–Mead simplex minimizer.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Initial edge length along each axis.
    pub initial_step: f64,
    /// Stop once the simplex diameter falls below this.
    pub x_tolerance: f64,
    /// Stop once the spread of vertex values falls below this.
    pub f_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            x_tolerance: 1e-10,
            f_tolerance: 1e-22,
            max_evaluations: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from a simplex built around `start`. `axes`
/// gives the edge directions; pass `None` for the coordinate axes.
pub fn minimize<const N: usize, F>(
    f: F,
    start: [f64; N],
    axes: Option<[[f64; N]; N]>,
    options: &SimplexOptions,
) -> SimplexOutcome<N>
where
    F: Fn(&[f64; N]) -> f64,
{
    let eval = |x: &[f64; N]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut vertices: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    vertices.push((start, eval(&start)));
    for i in 0..N {
        let mut v = start;
        for j in 0..N {
            let dir = match &axes {
                Some(a) => a[i][j],
                None => (i == j) as u8 as f64,
            };
            v[j] += options.initial_step * dir;
        }
        vertices.push((v, eval(&v)));
    }
    let mut evaluations = N + 1;

    let order = |vs: &mut Vec<([f64; N], f64)>| vs.sort_by(|a, b| a.1.total_cmp(&b.1));

    loop {
        order(&mut vertices);
        let best = vertices[0].1;
        let worst = vertices[N].1;
        let diameter = vertices[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(vertices[0].0.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= options.f_tolerance || diameter <= options.x_tolerance {
            return SimplexOutcome {
                x: vertices[0].0,
                value: best,
                evaluations,
                converged: true,
            };
        }
        if evaluations >= options.max_evaluations {
            return SimplexOutcome {
                x: vertices[0].0,
                value: best,
                evaluations,
                converged: false,
            };
        }

        let mut centroid = [0.0; N];
        for (v, _) in &vertices[..N] {
            for j in 0..N {
                centroid[j] += v[j] / N as f64;
            }
        }
        let towards = |coef: f64| {
            let mut p = [0.0; N];
            for j in 0..N {
                p[j] = centroid[j] + coef * (vertices[N].0[j] - centroid[j]);
            }
            p
        };

        let reflected = towards(-1.0);
        let f_reflected = eval(&reflected);
        evaluations += 1;
        if f_reflected < best {
            let expanded = towards(-2.0);
            let f_expanded = eval(&expanded);
            evaluations += 1;
            vertices[N] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < vertices[N - 1].1 {
            vertices[N] = (reflected, f_reflected);
            continue;
        }
        let contracted = if f_reflected < worst {
            towards(-0.5)
        } else {
            towards(0.5)
        };
        let f_contracted = eval(&contracted);
        evaluations += 1;
        if f_contracted < worst.min(f_reflected) {
            vertices[N] = (contracted, f_contracted);
            continue;
        }
        // Shrink towards the best vertex.
        let anchor = vertices[0].0;
        for (v, fv) in vertices[1..].iter_mut() {
            for j in 0..N {
                v[j] = anchor[j] + 0.5 * (v[j] - anchor[j]);
            }
            *fv = eval(v);
        }
        evaluations += N;
    }
}

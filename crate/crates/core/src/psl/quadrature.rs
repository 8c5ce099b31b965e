//! Composite Gauss–Legendre quadrature on bounded intervals.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like starting guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature points `(t, weight)` covering `[a, b]` with `order` points on
/// each interval between consecutive `cuts` (which must lie in `[a, b]`),
/// further split into `panels` equal pieces.
pub fn composite_points(a: f64, b: f64, cuts: &[f64], panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(order);
    let mut edges = vec![a];
    let mut sorted: Vec<f64> = cuts.iter().copied().filter(|c| *c > a && *c < b).collect();
    sorted.sort_by(f64::total_cmp);
    edges.extend(sorted);
    edges.push(b);
    let mut out = Vec::with_capacity((edges.len() - 1) * panels * order);
    for win in edges.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        if hi <= lo {
            continue;
        }
        let step = (hi - lo) / panels as f64;
        for p in 0..panels {
            let l = lo + step * p as f64;
            let half = step / 2.0;
            let mid = l + half;
            for (x, w) in xs.iter().zip(&ws) {
                out.push((mid + half * x, half * w));
            }
        }
    }
    out
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    composite_points(a, b, &[], panels, order)
        .into_iter()
        .map(|(t, w)| w * f(t))
        .sum()
}

//! Brute-force reference implementations. They work from the adjacency matrix
//! alone and share no code with the library's graph routines.
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

pub struct Adj {
    pub n: usize,
    pub m: Vec<Vec<bool>>,
}

impl Adj {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = vec![vec![false; n]; n];
        for &(u, v) in edges {
            m[u][v] = true;
            m[v][u] = true;
        }
        Adj { n, m }
    }

    pub fn degree(&self, i: usize) -> usize {
        self.m[i].iter().filter(|&&b| b).count()
    }
}

/// Floyd–Warshall hop distances; `u32::MAX` marks unreachable pairs.
pub fn floyd(a: &Adj) -> Vec<Vec<u32>> {
    let n = a.n;
    let inf = u32::MAX / 2;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if a.m[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Every shortest path from `s` to `t`, by exhaustive DFS over simple paths.
pub fn all_shortest_paths(a: &Adj, s: usize, t: usize) -> Vec<Vec<usize>> {
    fn walk(a: &Adj, path: &mut Vec<usize>, t: usize, out: &mut Vec<Vec<usize>>) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        for v in 0..a.n {
            if a.m[u][v] && !path.contains(&v) {
                path.push(v);
                walk(a, path, t, out);
                path.pop();
            }
        }
    }
    let mut all = Vec::new();
    walk(a, &mut vec![s], t, &mut all);
    let best = all.iter().map(Vec::len).min().unwrap_or(0);
    all.retain(|p| p.len() == best);
    all
}

/// Unnormalized betweenness over unordered pairs.
pub fn betweenness(a: &Adj) -> Vec<f64> {
    let mut b = vec![0.0; a.n];
    for s in 0..a.n {
        for t in s + 1..a.n {
            let paths = all_shortest_paths(a, s, t);
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    b[v] += 1.0 / total;
                }
            }
        }
    }
    b
}

pub fn max_set(values: &[f64]) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len()).filter(|&v| max - values[v] <= 1e-9 * max.abs().max(1.0)).collect()
}

/// Clique neighbors from explicit triangle enumeration.
pub fn clique_sets(a: &Adj) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); a.n];
    for i in 0..a.n {
        for j in i + 1..a.n {
            for k in j + 1..a.n {
                if a.m[i][j] && a.m[j][k] && a.m[i][k] {
                    for (x, y) in [(i, j), (i, k), (j, i), (j, k), (k, i), (k, j)] {
                        sets[x].push(y);
                    }
                }
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
        s.dedup();
    }
    sets
}

/// Vertices other than `i` on some shortest path from `i` to a maximal-betweenness vertex.
pub fn hbn_sets(a: &Adj) -> Vec<Vec<usize>> {
    let targets = max_set(&betweenness(a));
    (0..a.n)
        .map(|i| {
            let mut set: Vec<usize> = targets
                .iter()
                .filter(|&&j| j != i)
                .flat_map(|&j| all_shortest_paths(a, i, j))
                .flat_map(|p| p.into_iter().skip(1))
                .collect();
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect()
}

/// Burt's constraint with uniform tie weights `p_ij = 1 / deg(i)`.
pub fn burt(a: &Adj) -> Vec<f64> {
    let p = |i: usize, j: usize| if a.m[i][j] { 1.0 / a.degree(i) as f64 } else { 0.0 };
    (0..a.n)
        .map(|i| {
            let mut c = 0.0;
            for j in 0..a.n {
                if !a.m[i][j] {
                    continue;
                }
                let mut indirect = 0.0;
                for q in 0..a.n {
                    if q != i && q != j {
                        indirect += p(i, q) * p(q, j);
                    }
                }
                c += (p(i, j) + indirect).powi(2);
            }
            c
        })
        .collect()
}

/// Socio reward of agent `i` from explicit set membership tests.
pub fn socio(
    i: usize,
    r_env: &[f64],
    w: (f64, f64, f64),
    nearest: &[Vec<usize>],
    clique: &[Vec<usize>],
    hbn: &[Vec<usize>],
) -> f64 {
    let mut total = 0.0;
    for (j, r) in r_env.iter().enumerate() {
        let mut weight = 0.0;
        if nearest[i].contains(&j) {
            weight += w.0;
        }
        if clique[i].contains(&j) {
            weight += w.1;
        }
        if hbn[i].contains(&j) {
            weight += w.2;
        }
        total += weight * r;
    }
    total
}

/// Two-sample Kolmogorov–Smirnov test; asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 0.2 {
        return (d, 1.0);
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

#![allow(dead_code)]

use faer::Mat;
use sgp_core::gauss_newton::GNConfig;
use sgp_core::kernel::{bilinear_eval, kernel_eval, right_functional_eval, DiffOp, KernelSpec};
use sgp_core::pipeline::{solve_problem, InitStrategy, SolverSettings};
use sgp_core::gram::{assemble_cross, assemble_theta, build_nugget};
use sgp_core::kernel::Functional;
use sgp_core::problems::{burgers, elliptic, mfg, parabolic, Problem, ProblemSpec, Setup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgp_core::reference::grid_points;

/// Central differences of `f` for one multi-index, recursing one axis at a time.
pub fn fd_partial(f: &dyn Fn(&[f64]) -> f64, x: &[f64], orders: &[u8], h: &[f64]) -> f64 {
    let Some(axis) = orders.iter().position(|&o| o > 0) else {
        return f(x);
    };
    let mut rest = orders.to_vec();
    rest[axis] -= 1;
    let shifted = |d: f64| {
        let mut p = x.to_vec();
        p[axis] += d;
        p
    };
    let (plus, minus) = (shifted(h[axis]), shifted(-h[axis]));
    if rest[axis] > 0 {
        rest[axis] -= 1;
        (fd_partial(f, &plus, &rest, h) - 2.0 * fd_partial(f, x, &rest, h) + fd_partial(f, &minus, &rest, h))
            / (h[axis] * h[axis])
    } else {
        (fd_partial(f, &plus, &rest, h) - fd_partial(f, &minus, &rest, h)) / (2.0 * h[axis])
    }
}

pub fn fd_apply(op: &DiffOp, f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: &[f64]) -> f64 {
    op.terms()
        .iter()
        .map(|(mi, c)| c * fd_partial(f, x, &mi.0[..x.len()], h))
        .sum()
}

/// `(L_a (x) L_b) K` by nested finite differences of the plain kernel.
pub fn fd_bilinear(kernel: &KernelSpec, a: &DiffOp, x: &[f64], b: &DiffOp, y: &[f64], h: &[f64]) -> f64 {
    let outer = |xp: &[f64]| {
        let inner = |yp: &[f64]| kernel_eval(kernel, xp, yp).unwrap();
        fd_apply(b, &inner, y, h)
    };
    fd_apply(a, &outer, x, h)
}

/// Kernel, its operator list, and the domain span point pairs are drawn from.
pub struct KernelCase {
    pub name: &'static str,
    pub kernel: KernelSpec,
    pub ops: Vec<DiffOp>,
    pub span: Vec<(f64, f64)>,
    /// Per-axis finite-difference step.
    pub h: Vec<f64>,
    /// Per-axis offset scale between the two points of a pair.
    pub reach: Vec<f64>,
}

/// The kernel/operator combinations used by the four problems.
pub fn kernel_cases() -> Vec<KernelCase> {
    vec![
        KernelCase {
            name: "gaussian_iso elliptic",
            kernel: KernelSpec::gaussian_iso(0.2),
            ops: vec![DiffOp::identity(), DiffOp::sum_first(2), DiffOp::laplacian(2)],
            span: vec![(0.0, 3.0), (0.0, 3.0)],
            h: vec![5e-4, 5e-4],
            reach: vec![0.3, 0.3],
        },
        KernelCase {
            name: "gaussian_aniso space-time",
            kernel: KernelSpec::gaussian_aniso(vec![0.3, 0.05]),
            ops: vec![
                DiffOp::identity(),
                DiffOp::partial(1),
                DiffOp::second_partial(1),
                DiffOp::partial(0),
            ],
            span: vec![(0.0, 1.0), (-1.0, 1.0)],
            h: vec![5e-4, 1e-4],
            reach: vec![0.4, 0.07],
        },
        KernelCase {
            name: "periodic_exp torus",
            kernel: KernelSpec::periodic(),
            ops: vec![
                DiffOp::identity(),
                DiffOp::partial(0),
                DiffOp::partial(1),
                DiffOp::laplacian(2),
            ],
            span: vec![(-0.5, 0.5), (-0.5, 0.5)],
            h: vec![4e-4, 4e-4],
            reach: vec![0.5, 0.5],
        },
    ]
}

/// Plain lower Cholesky; `None` on a nonpositive pivot.
pub fn naive_cholesky(a: &Mat<f64>) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut l = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `(L L^T) x = b`.
pub fn chol_solve(l: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &Mat<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn elliptic_setup(n: usize, m: usize, sigma: f64, seed: u64) -> Setup {
    Setup {
        n,
        m,
        interior_ratio: 0.75,
        kernel: KernelSpec::gaussian_iso(sigma),
        seed,
    }
}

pub fn space_time_setup(n: usize, m: usize, ratio: f64, seed: u64) -> Setup {
    Setup {
        n,
        m,
        interior_ratio: ratio,
        kernel: KernelSpec::gaussian_aniso(vec![0.3, 0.05]),
        seed,
    }
}

pub fn mfg_setup(n: usize, m: usize, seed: u64) -> Setup {
    Setup {
        n,
        m,
        interior_ratio: 1.0,
        kernel: KernelSpec::periodic(),
        seed,
    }
}

/// One small instance of every problem.
pub fn small_problems(seed: u64) -> Vec<(&'static str, Problem)> {
    vec![
        ("elliptic", elliptic::elliptic_problem(&elliptic_setup(40, 20, 0.2, seed)).unwrap()),
        (
            "burgers",
            burgers::burgers_problem(&space_time_setup(36, 18, 5.0 / 6.0, seed), burgers::DEFAULT_NU).unwrap(),
        ),
        ("parabolic", parabolic::parabolic_problem(&space_time_setup(35, 14, 6.0 / 7.0, seed)).unwrap()),
        ("mfg", mfg::mfg_problem(&mfg_setup(30, 15, seed), mfg::DEFAULT_NU, 1e-10).unwrap()),
    ]
}

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dense_psi_gram(problem: &Problem) -> Mat<f64> {
    let psi = &problem.spec.psi.entries;
    let k = &problem.spec.kernel;
    Mat::from_fn(psi.len(), psi.len(), |i, j| bilinear_eval(k, &psi[i], &psi[j]).unwrap())
}

/// Full-GP Gauss-Newton on `gamma I + K(psi, psi)` with dense Cholesky throughout.
/// Returns `(gamma I + K)^-1 z_f` for every field.
pub fn dense_gp_solve(problem: &Problem, gamma: f64) -> Vec<Vec<f64>> {
    let obj = problem.objective.as_ref();
    let mut s = dense_psi_gram(problem);
    let n = s.nrows();
    for i in 0..n {
        s[(i, i)] += gamma;
    }
    let l = naive_cholesky(&s).expect("gamma I + K is positive definite");
    let p = obj.free_dim();
    let wf = obj.field_weight();
    let mut w = obj.initial_guess();
    for _ in 0..400 {
        let z = obj.z_of_w(&w);
        let jac = obj.jacobian(&w).dense();
        let mut h = Mat::<f64>::zeros(p, p);
        let mut g = vec![0.0; p];
        for f in 0..obj.field_count() {
            let zf = &z[f * n..(f + 1) * n];
            let alpha = chol_solve(&l, zf);
            let cols: Vec<Vec<f64>> = (0..p)
                .map(|c| chol_solve(&l, &(0..n).map(|r| jac[(f * n + r, c)]).collect::<Vec<_>>()))
                .collect();
            for a in 0..p {
                g[a] += wf * (0..n).map(|r| jac[(f * n + r, a)] * alpha[r]).sum::<f64>();
                for b in 0..p {
                    h[(a, b)] += wf * (0..n).map(|r| jac[(f * n + r, a)] * cols[b][r]).sum::<f64>();
                }
            }
        }
        if let Some(soft) = obj.soft_terms(&w) {
            let sj = soft.jacobian.dense();
            for a in 0..p {
                for (r, (v, c)) in soft.values.iter().zip(&soft.weights).enumerate() {
                    g[a] += c * sj[(r, a)] * v;
                }
                for b in 0..p {
                    h[(a, b)] += (0..soft.values.len()).map(|r| soft.weights[r] * sj[(r, a)] * sj[(r, b)]).sum::<f64>();
                }
            }
        }
        let hl = naive_cholesky(&h).expect("normal matrix is positive definite");
        let delta = chol_solve(&hl, &g);
        w.iter_mut().zip(&delta).for_each(|(a, d)| *a -= d);
        if sup(&delta) < 1e-13 * (1.0 + sup(&w)) {
            break;
        }
    }
    let z = obj.z_of_w(&w);
    (0..obj.field_count()).map(|f| chol_solve(&l, &z[f * n..(f + 1) * n])).collect()
}

/// Largest relative gap over a 25x25 grid between the sparse solve with `phi = psi`, `eta = 0`
/// and the dense full-GP solve.
pub fn gp_limit_deviation(problem: Problem, gamma: f64) -> Result<f64, String> {
    let cfg = SolverSettings {
        gamma,
        eta: 0.0,
        gn: GNConfig {
            step_tol: 1e-11,
            max_iter: 150,
            ..GNConfig::default()
        },
        init: InitStrategy::Default,
        dense_psi: false,
    };
    let solved = solve_problem(problem, &cfg).map_err(|e| e.to_string())?;
    if solved.assembly.factor.eta_used != 0.0 {
        return Err("nugget escalated".into());
    }
    if solved.problem.spec.phi != solved.problem.spec.psi {
        return Err("inducing functionals differ from the sample functionals".into());
    }
    let alphas = dense_gp_solve(&solved.problem, gamma);
    let grid = grid_points(&solved.problem.spec.domain, 25).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (model, alpha) in solved.models.iter().zip(&alphas) {
        let psi = &solved.problem.spec.psi.entries;
        let dense: Vec<f64> = grid
            .iter()
            .map(|x| psi.iter().zip(alpha).map(|(f, a)| a * right_functional_eval(&solved.problem.spec.kernel, x, f).unwrap()).sum())
            .collect();
        let sparse = model.evaluate_many(&grid).map_err(|e| e.to_string())?;
        let diff: Vec<f64> = sparse.iter().zip(&dense).map(|(a, b)| a - b).collect();
        worst = worst.max(sup(&diff) / sup(&dense));
    }
    Ok(worst)
}

/// `K(psi, psi) - B^T (Theta + eta R)^-1 B`, built with the test's own Cholesky.
pub fn dense_nystrom_residual(spec: &ProblemSpec, eta: f64) -> (Mat<f64>, Mat<f64>) {
    let k = assemble_theta(&spec.kernel, &spec.psi).unwrap();
    let mut theta = assemble_theta(&spec.kernel, &spec.phi).unwrap();
    let nugget = build_nugget(theta.as_ref(), &spec.phi.blocks, eta).unwrap();
    for (i, s) in nugget.scale_diagonal().iter().enumerate() {
        theta[(i, i)] += eta * s;
    }
    let b = assemble_cross(&spec.kernel, &spec.phi, &spec.psi).unwrap();
    let l = naive_cholesky(&theta).expect("theta factors");
    let n = spec.psi.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| chol_solve(&l, &(0..b.nrows()).map(|i| b[(i, j)]).collect::<Vec<_>>()))
        .collect();
    let resid = Mat::from_fn(n, n, |i, j| {
        let q: f64 = (0..b.nrows()).map(|r| b[(r, i)] * cols[j][r]).sum();
        k[(i, j)] - q
    });
    (k, resid)
}

pub fn spectral_norm(m: &Mat<f64>) -> f64 {
    jacobi_eigenvalues(m).iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Worst relative gap between exact and finite-difference bilinear values over every
/// operator pair of `case`, with the offending pair described.
pub fn worst_fd_deviation(case: &KernelCase, pairs: usize, seed: u64) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for a in &case.ops {
        for b in &case.ops {
            for _ in 0..pairs {
                let x: Vec<f64> = case
                    .span
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * rng.random_range(0.1..0.9))
                    .collect();
                let y: Vec<f64> = x
                    .iter()
                    .zip(&case.reach)
                    .zip(&case.span)
                    .map(|((xi, r), &(lo, hi))| {
                        let w = hi - lo;
                        (xi + r * rng.random_range(-1.0..1.0)).clamp(lo + 0.1 * w, lo + 0.9 * w)
                    })
                    .collect();
                let fx = Functional::new(x.clone(), a.clone());
                let fy = Functional::new(y.clone(), b.clone());
                let exact = bilinear_eval(&case.kernel, &fx, &fy).unwrap();
                let fd = fd_bilinear(&case.kernel, a, &x, b, &y, &case.h);
                // Cauchy-Schwarz bound on the pair's magnitude, so pairs near a zero crossing are judged fairly.
                let aa = bilinear_eval(&case.kernel, &fx, &fx).unwrap();
                let bb = bilinear_eval(&case.kernel, &fy, &fy).unwrap();
                let rel = (fd - exact).abs() / exact.abs().max(1e-2 * (aa * bb).sqrt());
                if rel > worst {
                    worst = rel;
                    at = format!("{a:?} / {b:?} at {x:?}, {y:?}: exact {exact}, fd {fd}");
                }
            }
        }
    }
    (worst, at)
}

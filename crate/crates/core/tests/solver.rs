use faer::Mat;
use sgp_core::gauss_newton::{build_solution, GNConfig};
use sgp_core::kernel::{bilinear_eval, Functional, KernelSpec};
use sgp_core::pipeline::{run, InitStrategy, ProblemParams, SolverSettings};
use sgp_core::problems::{burgers, elliptic, mfg, Problem, ProblemKind};
use sgp_core::reference::grid_points;

mod common;
use common::{chol_solve, elliptic_setup, gp_limit_deviation, mfg_setup, naive_cholesky, space_time_setup, sup};

fn settings(gamma: f64, eta: f64) -> SolverSettings {
    SolverSettings {
        gamma,
        eta,
        gn: GNConfig::default(),
        init: InitStrategy::Default,
        dense_psi: false,
    }
}

fn gp_limit_case(name: &str, problem: Problem, gamma: f64) {
    let rel = gp_limit_deviation(problem, gamma).unwrap();
    assert!(rel < 1e-6, "{name}: sparse vs full GP differ by {rel:e}");
}

// Tiny elliptic instances with the full coupling make plain Gauss-Newton cycle, so the
// limit is checked on a weaker coupling where both solvers reach the same fixed point.
#[test]
fn full_inducing_set_reproduces_the_dense_gp_elliptic() {
    let problem = elliptic::elliptic_problem_with_coupling(&elliptic_setup(60, 60, 0.3, 4), 0.1).unwrap();
    gp_limit_case("elliptic", problem, 1e-6);
}

#[test]
fn full_inducing_set_reproduces_the_dense_gp_burgers() {
    let problem = burgers::burgers_problem(&space_time_setup(48, 48, 5.0 / 6.0, 4), 0.05).unwrap();
    gp_limit_case("burgers", problem, 1e-6);
}

#[test]
fn full_inducing_set_reproduces_the_dense_gp_mfg() {
    let problem = mfg::mfg_problem(&mfg_setup(50, 50, 4), 0.1, 1e-5).unwrap();
    gp_limit_case("mfg", problem, 1e-5);
}

#[test]
fn linear_problem_is_solved_by_the_first_step() {
    let problem = elliptic::elliptic_problem_with_coupling(&elliptic_setup(300, 150, 0.2, 2), 0.0).unwrap();
    let solved = sgp_core::pipeline::solve_problem(problem, &settings(1e-8, 1e-8)).unwrap();
    let h = &solved.gn.loss_history;
    assert!(solved.gn.converged);
    // The second step only confirms the first.
    assert_eq!(solved.gn.iterations, 2, "history {h:?}");
    assert!((h[1] - h[2]).abs() <= 1e-9 * h[1], "history {h:?}");
}

#[test]
fn representer_reproduces_the_nystrom_fit_at_the_samples() {
    let params = ProblemParams {
        kind: ProblemKind::Elliptic,
        setup: elliptic_setup(60, 30, 0.3, 9),
        nu: None,
    };
    let gamma = 1e-4;
    let solved = run(&params, &settings(gamma, 1e-6)).unwrap();
    let spec = &solved.problem.spec;
    let model = &solved.models[0];
    assert_eq!(model.beta.len(), spec.phi.len());

    // Q(psi, psi) (gamma I + Q)^-1 z from dense pieces.
    let (phi, psi) = (&spec.phi.entries, &spec.psi.entries);
    let scales = solved.assembly.nugget.scale_diagonal();
    let eta = solved.assembly.factor.eta_used;
    let theta = Mat::from_fn(phi.len(), phi.len(), |i, j| {
        bilinear_eval(&spec.kernel, &phi[i], &phi[j]).unwrap() + if i == j { eta * scales[i] } else { 0.0 }
    });
    let lt = naive_cholesky(&theta).unwrap();
    let b = Mat::from_fn(phi.len(), psi.len(), |i, j| bilinear_eval(&spec.kernel, &phi[i], &psi[j]).unwrap());
    let tib: Vec<Vec<f64>> = (0..psi.len())
        .map(|j| chol_solve(&lt, &(0..phi.len()).map(|i| b[(i, j)]).collect::<Vec<_>>()))
        .collect();
    let q = Mat::from_fn(psi.len(), psi.len(), |i, j| (0..phi.len()).map(|k| b[(k, i)] * tib[j][k]).sum::<f64>());
    let mut s = q.clone();
    for i in 0..psi.len() {
        s[(i, i)] += gamma;
    }
    let alpha = chol_solve(&naive_cholesky(&s).unwrap(), &solved.gn.z);
    let expect: Vec<f64> = (0..psi.len()).map(|i| (0..psi.len()).map(|j| q[(i, j)] * alpha[j]).sum()).collect();

    let applied: Vec<f64> = psi
        .iter()
        .map(|f| phi.iter().zip(&model.beta).map(|(g, b)| b * bilinear_eval(&spec.kernel, f, g).unwrap()).sum())
        .collect();
    let scale = sup(&expect);
    for (a, e) in applied.iter().zip(&expect) {
        assert!((a - e).abs() <= 1e-8 * scale, "{a} vs {e}");
    }
    // Point values of u agree with the Dirac block.
    for (i, x) in spec.samples.interior.iter().enumerate() {
        assert!((model.evaluate(x).unwrap() - applied[i]).abs() <= 1e-10 * scale);
    }
}

#[test]
fn zero_data_gives_the_zero_function() {
    let params = ProblemParams {
        kind: ProblemKind::Elliptic,
        setup: elliptic_setup(40, 20, 0.3, 1),
        nu: None,
    };
    let solved = run(&params, &settings(1e-6, 1e-6)).unwrap();
    let zero = vec![0.0; solved.gn.z.len()];
    let model = build_solution(
        &zero,
        &solved.assembly.lri,
        &solved.assembly.factor,
        &solved.problem.spec.kernel,
        &solved.problem.spec.phi,
    )
    .unwrap();
    assert!(model.beta.iter().all(|b| *b == 0.0));
    assert_eq!(model.evaluate(&[1.0, 2.0]).unwrap(), 0.0);
}

#[test]
fn batch_evaluation_matches_pointwise() {
    let params = ProblemParams {
        kind: ProblemKind::Elliptic,
        setup: elliptic_setup(80, 40, 0.3, 2),
        nu: None,
    };
    let solved = run(&params, &settings(1e-6, 1e-6)).unwrap();
    let model = &solved.models[0];
    let mut grid = grid_points(&solved.problem.spec.domain, 12).unwrap();
    let batch = model.evaluate_many(&grid).unwrap();
    for (p, v) in grid.iter().zip(&batch) {
        assert_eq!(model.evaluate(p).unwrap(), *v);
    }
    grid.reverse();
    let mut rev = model.evaluate_many(&grid).unwrap();
    rev.reverse();
    assert_eq!(rev, batch);
    assert!(model.evaluate(&[1.0]).is_err());
}

#[test]
fn single_inducing_value_evaluates_to_one() {
    use sgp_core::collocation::{BlockRange, FunctionalVector};
    use sgp_core::gauss_newton::SolutionModel;
    let x0 = vec![0.4, 0.7];
    let model = SolutionModel {
        kernel: KernelSpec::gaussian_iso(0.2),
        phi: FunctionalVector {
            entries: vec![Functional::dirac(x0.clone())],
            blocks: vec![BlockRange {
                label: "dirac".into(),
                start: 0,
                len: 1,
            }],
        },
        beta: vec![1.0],
        gamma: 1.0,
        eta_used: 0.0,
        z_star: vec![1.0],
    };
    assert_eq!(model.evaluate(&x0).unwrap(), 1.0);
}

/// First-order condition on the gamma-scaled objective `z^T (I + A^T A)^-1 z`, whose
/// gradient is `gamma` times the reported one.
#[test]
fn stationarity_at_termination() {
    let gamma = 1e-12;
    let params = ProblemParams {
        kind: ProblemKind::Elliptic,
        setup: elliptic_setup(1200, 600, 0.2, 1),
        nu: None,
    };
    let solved = run(&params, &settings(gamma, gamma)).unwrap();
    assert!(solved.gn.converged);
    let zmax = sup(&solved.gn.z);
    let scaled = gamma * solved.gn.gradient_norm;
    assert!(scaled <= 1e-3 * (1.0 + zmax), "scaled gradient {scaled:e} vs |z| {zmax:e}");
}

#[test]
fn identical_inputs_give_identical_histories() {
    let params = ProblemParams {
        kind: ProblemKind::Burgers,
        setup: space_time_setup(120, 60, 5.0 / 6.0, 3),
        nu: Some(0.02),
    };
    let a = run(&params, &settings(1e-6, 1e-6)).unwrap();
    let b = run(&params, &settings(1e-6, 1e-6)).unwrap();
    let bits = |h: &[f64]| h.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.gn.loss_history), bits(&b.gn.loss_history));
    assert_eq!(a.models[0].beta, b.models[0].beta);
}

#[test]
fn mfg_small_instance_satisfies_its_constraints() {
    let problem = mfg::mfg_problem(&mfg_setup(60, 30, 1), 0.1, 1e-10).unwrap();
    let solved = sgp_core::pipeline::solve_problem(problem, &settings(1e-10, 1e-4)).unwrap();
    let obj = solved.problem.objective.as_ref();
    let r = obj.constraint_residuals(&solved.gn.w, &solved.gn.z);
    assert_eq!(r[0], 0.0);
    assert!(r[1].abs() < 1e-14);
    let pde: f64 = r[2..].iter().map(|v| v * v).sum();
    assert!(pde < 1e-4, "summed PDE residual squares {pde:e}");
}

#[test]
fn bad_inputs_are_rejected() {
    let cfg = GNConfig {
        step_size: 0.0,
        ..GNConfig::default()
    };
    assert!(cfg.validate().is_err());
    let cfg = GNConfig {
        max_iter: 0,
        ..GNConfig::default()
    };
    assert!(cfg.validate().is_err());
    let params = ProblemParams {
        kind: ProblemKind::Elliptic,
        setup: elliptic_setup(40, 20, 0.3, 1),
        nu: None,
    };
    let solved = run(&params, &settings(1e-6, 1e-6)).unwrap();
    let bad = sgp_core::gauss_newton::solve(
        solved.problem.objective.as_ref(),
        &solved.assembly.lri,
        &GNConfig::default(),
        &[0.0; 3],
    );
    assert!(bad.is_err());
    let mut too_big = elliptic_setup(40, 20, 0.3, 1);
    too_big.m = 50;
    assert!(elliptic::elliptic_problem(&too_big).is_err());
}

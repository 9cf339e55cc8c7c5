//! Acceptance gate: one test per shipping criterion, each printing a single
//! verdict line. Run `cargo test --test acceptance -- --nocapture` to see
//! the lines for passing criteria too (cargo hides captured output unless a
//! test fails).

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use subliminal_cli::config::ExperimentConfig;
use subliminal_cli::runner::{run_experiment, Aggregate, RunMode};
use subliminal_core::diagnostics::{
    chi_channel, dense_ridge_dual, dense_ridge_oracle, public_reconstruction, HiddenDirection,
    HiddenObjective, PublicChannelSpec, RidgeOptions,
};
use subliminal_core::model::{LinearModel, ModelDesc};
use subliminal_core::qsim::{amplitude_encode, marginal_probs, BrickworkCircuit, QnnConfig};
use subliminal_core::{linalg, rng};

/// Print the verdict line and fail the test if the criterion does not hold.
fn verdict(n: u32, topic: &str, ok: bool, detail: &str) {
    let word = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} ({topic}): {word} [{detail}]");
    assert!(ok, "ACCEPTANCE {n} ({topic}) failed: {detail}");
}

fn within_budget(elapsed: Duration, budget: Duration) -> bool {
    elapsed <= budget
}

fn random_vec(r: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn desk_config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/desk")
        .join(name);
    ExperimentConfig::load(&path).expect("desk config loads")
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    linalg::norm2(&linalg::sub(got, want)) / linalg::norm2(want)
}

#[test]
fn criterion_1_parameter_counts() {
    let start = Instant::now();
    let cases: [(ModelDesc, usize); 7] = [
        (ModelDesc::qnn(QnnConfig::task(2)), 270),
        (ModelDesc::qnn(QnnConfig::task(4)), 540),
        (ModelDesc::Cnn { filters: 1 }, 390),
        (ModelDesc::Cnn { filters: 2 }, 760),
        (ModelDesc::Mlp { layers: vec![784, 4, 20] }, 3240),
        (ModelDesc::Mlp { layers: vec![784, 128, 20] }, 103060),
        (ModelDesc::Mlp { layers: vec![784, 128, 16] }, 102544),
    ];
    let mut bad = Vec::new();
    for (desc, want) in &cases {
        let got = desc.param_count();
        if got != *want {
            bad.push(format!("{}: {got} != {want}", desc.label()));
        }
    }
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && within_budget(elapsed, Duration::from_secs(1));
    verdict(
        1,
        "parameter counts",
        ok,
        &format!(
            "7 architectures, mismatches: {}; {:.0?}",
            if bad.is_empty() { "none".to_string() } else { bad.join(", ") },
            elapsed
        ),
    );
}

#[test]
fn criterion_2_differentiation() {
    let start = Instant::now();
    let qnn = ModelDesc::qnn(QnnConfig::task(2)).build();
    let mlp = ModelDesc::Mlp { layers: vec![784, 4, 20] }.build();
    let mut worst_fd: f64 = 0.0;
    let mut worst_adjoint: f64 = 0.0;

    for (m, model) in [(0u64, &qnn), (1u64, &mlp)] {
        let mut r = rng::stream(42 + m, "acceptance-diff", 0);
        for point in 0..5 {
            let params = model.init_params(1000 + 10 * m + point);
            let input = if m == 0 {
                random_vec(&mut r, 784, 0.0, 1.0)
            } else {
                random_vec(&mut r, 784, -1.0, 1.0)
            };
            let tangent = random_vec(&mut r, params.len(), -1.0, 1.0);
            let cot = random_vec(&mut r, model.logit_count(), -1.0, 1.0);

            // JVP against a central finite difference along the tangent.
            let jvp = model.jvp(&input, &params, &tangent);
            let h = 1e-5;
            let shift = |s: f64| -> Vec<f64> {
                let p: Vec<f64> = params
                    .iter()
                    .zip(&tangent)
                    .map(|(pi, ti)| pi + s * h * ti)
                    .collect();
                model.forward(&input, &p)
            };
            let (up, down) = (shift(1.0), shift(-1.0));
            let fd: Vec<f64> = up
                .iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect();
            worst_fd = worst_fd.max(rel_err(&jvp, &fd));

            // VJP against the same difference projected on the cotangent.
            let vjp = model.vjp(&input, &params, &cot);
            let vjp_dir = linalg::dot(&vjp, &tangent);
            let fd_dir = linalg::dot(&fd, &cot);
            worst_fd = worst_fd.max((vjp_dir - fd_dir).abs() / fd_dir.abs());

            // Adjoint identity <cot, J v> = <J^T cot, v>.
            let lhs = linalg::dot(&cot, &jvp);
            let rhs = linalg::dot(&vjp, &tangent);
            worst_adjoint = worst_adjoint.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst_fd <= 1e-5
        && worst_adjoint <= 1e-10
        && within_budget(elapsed, Duration::from_secs(120));
    verdict(
        2,
        "differentiation",
        ok,
        &format!(
            "worst FD rel {worst_fd:.2e} (tol 1e-5), worst adjoint {worst_adjoint:.2e} (tol 1e-10); {elapsed:.0?}"
        ),
    );
}

#[test]
fn criterion_3_ridge_cg() {
    let start = Instant::now();
    let mut r = rng::stream(7, "acceptance-ridge", 0);
    let mut worst_primal: f64 = 0.0;
    let mut worst_dual: f64 = 0.0;
    for _ in 0..20 {
        let rows = r.random_range(5..=40);
        let p = r.random_range(rows.min(8)..=50);
        let j: Vec<Vec<f64>> = (0..rows)
            .map(|_| random_vec(&mut r, p, -1.0, 1.0))
            .collect();
        let drift = random_vec(&mut r, p, -1.0, 1.0);
        let lambda = 1e-6;

        let model = LinearModel::new(rows, p);
        let flat: Vec<f64> = j.iter().flatten().cloned().collect();
        let spec = PublicChannelSpec {
            model: &model,
            params: &vec![0.0; p],
            public_inputs: &[flat],
            block: 0..rows,
        };
        let report = public_reconstruction(&spec, &drift, lambda, 1e-12, 2000).unwrap();
        let primal = dense_ridge_oracle(&j, &drift, lambda);
        let dual = dense_ridge_dual(&j, &drift, lambda);
        worst_primal = worst_primal.max(rel_err(&report.delta_theta_pub, &primal));
        worst_dual = worst_dual.max(rel_err(&report.delta_theta_pub, &dual));
    }

    // Diagonal toys: coordinate i is filtered by s_i^2 / (s_i^2 + lambda).
    let mut worst_filter: f64 = 0.0;
    for trial in 0..5 {
        let p = 8;
        let svals = random_vec(&mut r, p, 0.05, 2.0);
        let mut j = vec![vec![0.0; p]; p];
        for i in 0..p {
            j[i][i] = svals[i];
        }
        let drift = random_vec(&mut r, p, -1.0, 1.0);
        let lambda = 10f64.powi(-(trial as i32) - 2);
        let model = LinearModel::new(p, p);
        let flat: Vec<f64> = j.iter().flatten().cloned().collect();
        let spec = PublicChannelSpec {
            model: &model,
            params: &vec![0.0; p],
            public_inputs: &[flat],
            block: 0..p,
        };
        let report = public_reconstruction(&spec, &drift, lambda, 1e-14, 2000).unwrap();
        for i in 0..p {
            let s2 = svals[i] * svals[i];
            let expected = s2 / (s2 + lambda) * drift[i];
            worst_filter = worst_filter.max((report.delta_theta_pub[i] - expected).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst_primal <= 1e-6
        && worst_dual <= 1e-6
        && worst_filter <= 1e-10
        && within_budget(elapsed, Duration::from_secs(60));
    verdict(
        3,
        "ridge/CG",
        ok,
        &format!(
            "20 toys: CG vs oracle {worst_primal:.2e}, vs dual {worst_dual:.2e} (tol 1e-6); filter law {worst_filter:.2e} (tol 1e-10); {elapsed:.0?}"
        ),
    );
}

#[test]
fn criterion_4_chi_properties() {
    let mut r = rng::stream(11, "acceptance-chi", 0);
    let p = 12;
    let opts = RidgeOptions { lambda: 1e-10, cg_tol: 1e-14, cg_max_iters: 2000 };

    // Full visibility: J = I, every drift reconstructs completely.
    let mut eye = vec![vec![0.0; p]; p];
    for i in 0..p {
        eye[i][i] = 1.0;
    }
    let flat_eye: Vec<f64> = eye.iter().flatten().cloned().collect();
    let model = LinearModel::new(p, p);
    let drift = random_vec(&mut r, p, -1.0, 1.0);
    let g = HiddenDirection {
        g: random_vec(&mut r, p, -1.0, 1.0),
        objective: HiddenObjective::PairFlipLossGrad,
    };
    let inputs = vec![flat_eye];
    let report = chi_channel(&model, &vec![0.0; p], &(0..p), &inputs, &drift, &g, &opts).unwrap();
    let chi_full = report.chi.unwrap();
    let full_err = (chi_full - 1.0).abs();

    // Scale invariance under g -> c g.
    let scaled = HiddenDirection { g: g.g.iter().map(|v| 375.0 * v).collect(), ..g.clone() };
    let report_scaled =
        chi_channel(&model, &vec![0.0; p], &(0..p), &inputs, &drift, &scaled, &opts).unwrap();
    let scale_err = (report_scaled.chi.unwrap() - chi_full).abs();

    // Null-space drift: channel sees only the first two coordinates, drift
    // lives in the rest, so nothing reconstructs.
    let mut j = vec![vec![0.0; p]; 2];
    j[0][0] = 1.3;
    j[1][1] = -0.8;
    let flat_j: Vec<f64> = j.iter().flatten().cloned().collect();
    let null_model = LinearModel::new(2, p);
    let mut null_drift = vec![0.0; p];
    for v in null_drift[2..].iter_mut() {
        *v = r.random_range(0.5..1.5);
    }
    let report_null = chi_channel(
        &null_model,
        &vec![0.0; p],
        &(0..2),
        &[flat_j],
        &null_drift,
        &g,
        &opts,
    )
    .unwrap();
    let null_err = report_null.chi.unwrap().abs();

    let ok = scale_err <= 1e-12 && full_err <= 1e-6 && null_err <= 1e-6;
    verdict(
        4,
        "chi properties",
        ok,
        &format!(
            "scale invariance {scale_err:.2e} (tol 1e-12), full visibility |chi-1| {full_err:.2e}, null space |chi| {null_err:.2e} (tol 1e-6)"
        ),
    );
}

#[test]
fn criterion_5_simulator_physics() {
    let cfg = QnnConfig::task(2);
    let mut r = rng::stream(13, "acceptance-physics", 0);
    let mut worst_norm: f64 = 0.0;
    let mut worst_marginal: f64 = 0.0;
    for _ in 0..100 {
        let params = random_vec(&mut r, cfg.param_count(), -2.0, 2.0);
        let input = random_vec(&mut r, 784, 0.0, 1.0);
        let mut state = amplitude_encode(&input, cfg.num_qubits).unwrap();
        let circuit = BrickworkCircuit::build(&cfg, &params, false).unwrap();
        circuit.apply(&mut state);
        worst_norm = worst_norm.max((state.norm() - 1.0).abs());
        let total: f64 = marginal_probs(&state, cfg.measured_qubits).iter().sum();
        worst_marginal = worst_marginal.max((total - 1.0).abs());
    }

    // All-zero parameters leave any encoded state untouched.
    let input = random_vec(&mut r, 784, 0.0, 1.0);
    let encoded = amplitude_encode(&input, cfg.num_qubits).unwrap();
    let mut evolved = encoded.clone();
    let circuit = BrickworkCircuit::build(&cfg, &vec![0.0; cfg.param_count()], false).unwrap();
    circuit.apply(&mut evolved);
    let identity_exact = encoded
        .amplitudes
        .iter()
        .zip(&evolved.amplitudes)
        .all(|(a, b)| a == b);

    let ok = worst_norm <= 1e-12 && worst_marginal <= 1e-12 && identity_exact;
    verdict(
        5,
        "simulator physics",
        ok,
        &format!(
            "100 circuits: |norm-1| {worst_norm:.2e}, |sum marginal - 1| {worst_marginal:.2e} (tol 1e-12); zero-parameter identity exact: {identity_exact}"
        ),
    );
}

#[test]
fn criterion_6_aux_channel_desk() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk_config("aux_mlp.toml");
    cfg.output_dir = tmp.path().join("aux");
    cfg.diagnostics.chi_aux = false;
    cfg.diagnostics.sampled_chi = false;
    assert_eq!(cfg.seeds.len(), 3, "criterion pins 3 seeds");
    assert_eq!(cfg.teacher.epochs, 3);
    assert_eq!(cfg.student.epochs, 5);
    let noise = cfg.noise.unwrap();
    assert_eq!((noise.batches, noise.batch_size), (20, 256));
    assert_eq!(cfg.data.n_train, 1000);

    let out = run_experiment(&cfg, RunMode::Full).unwrap();
    let teacher = out.aggregate.metrics["teacher_acc"].mean;
    let transmission = out.aggregate.metrics["transmission"].mean;
    let elapsed = start.elapsed();
    let ok = teacher >= 0.80
        && transmission >= 0.75
        && within_budget(elapsed, Duration::from_secs(600));
    verdict(
        6,
        "aux channel desk",
        ok,
        &format!(
            "teacher acc {teacher:.3} (need >= 0.80), transmission {transmission:.3} (need >= 0.75), 3 seeds; {elapsed:.0?}"
        ),
    );
}

fn run_task_model(name: &str, out_root: &Path) -> Aggregate {
    let mut cfg = desk_config(name);
    cfg.output_dir = out_root.join(cfg.name.clone());
    cfg.diagnostics.chi = true;
    cfg.diagnostics.sampled_chi = false;
    run_experiment(&cfg, RunMode::Full).unwrap().aggregate
}

#[test]
fn criterion_7_task_channel_ordering() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cnn = run_task_model("task_cnn.toml", tmp.path());
    let mlp = run_task_model("task_mlp.toml", tmp.path());
    let qnn = run_task_model("task_qnn.toml", tmp.path());

    let chi = |a: &Aggregate| a.metrics["chi"].mean;
    let trans = |a: &Aggregate| a.metrics["transmission"].mean;
    let (chi_c, chi_m, chi_q) = (chi(&cnn), chi(&mlp), chi(&qnn));
    let (t_c, t_m, t_q) = (trans(&cnn), trans(&mlp), trans(&qnn));

    let elapsed = start.elapsed();
    let ok = chi_c < chi_m
        && chi_m < chi_q
        && chi_c < 0.15
        && t_c <= t_m
        && t_m < t_q
        && within_budget(elapsed, Duration::from_secs(3600));
    verdict(
        7,
        "task channel ordering",
        ok,
        &format!(
            "chi CNN {chi_c:.3} < MLP {chi_m:.3} < QNN {chi_q:.3}, chi(CNN) < 0.15; transmission CNN {t_c:.3} <= MLP {t_m:.3} < QNN {t_q:.3}; 3 seeds each; {elapsed:.0?}"
        ),
    );
}

#[test]
fn criterion_8_clean_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk_config("task_qnn_clean.toml");
    cfg.output_dir = tmp.path().join("clean");
    assert!(cfg.poison.is_none(), "control must be unpoisoned");

    let out = run_experiment(&cfg, RunMode::Full).unwrap();
    let mut worst_base: f64 = 0.0;
    let mut worst_student: f64 = 0.0;
    for record in &out.records {
        worst_base = worst_base.max(record.metrics["base_flip"]);
        worst_student = worst_student.max(record.metrics["student_flip"]);
    }
    let ok = worst_base <= 0.05 && worst_student <= 0.05;
    verdict(
        8,
        "clean baseline",
        ok,
        &format!(
            "worst clean base flip {worst_base:.3}, worst clean-teacher student flip {worst_student:.3} (both need <= 0.05, 3 seeds)"
        ),
    );
}

#[test]
fn criterion_9_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk_config("task_mlp.toml");
    cfg.seeds = vec![5];
    cfg.data.n_train = 200;
    cfg.data.n_test = 100;
    cfg.base.as_mut().unwrap().epochs = 4;
    cfg.teacher.epochs = 3;
    cfg.student.epochs = 3;
    cfg.diagnostics.chi = true;
    cfg.diagnostics.sampled_chi = true;

    let mut bytes = Vec::new();
    for run in 0..2 {
        cfg.output_dir = tmp.path().join(format!("run{run}"));
        run_experiment(&cfg, RunMode::Full).unwrap();
        bytes.push(std::fs::read(cfg.output_dir.join("metrics_seed5.json")).unwrap());
    }
    let identical = bytes[0] == bytes[1];
    verdict(
        9,
        "determinism",
        identical,
        &format!(
            "independent rerun of the same config+seed: metric JSON byte-identical: {identical} ({} bytes)",
            bytes[0].len()
        ),
    );
}

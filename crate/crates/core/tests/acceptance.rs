use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use qobs_core::encoding::{pure_state, GibbsSign};
use qobs_core::fixtures::{fixture, Expectation};
use qobs_core::icm::{assemble_icm_povm, solve_delta, BiasStructure, CategoryBias, IcmPovm};
use qobs_core::lindblad::{Evolver, InteractionTerm, LindbladModel};
use qobs_core::linalg::{self, ComplexMatrix, ComplexVector, SubsystemDims, C64};
use qobs_core::oracle::{delta_scan, evolve_exact, random_density, random_model};
use qobs_core::povm::PovmSet;
use qobs_core::scenario::{dims_report, parse_config, run_monte_carlo, ScenarioConfig, Scenario};
use qobs_core::strategy::build_strategy_povm;
use qobs_core::templates::{make_category_operator, pauli_string_generators, random_unitary, sample_templates, CategorySpec, Covariance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(fixture(name).expect("fixture").file)
}

fn load(name: &str) -> ScenarioConfig {
    parse_config(fixture(name).expect("fixture").source).expect("fixture parses")
}

fn random_state<R: Rng>(dim: usize, rng: &mut R) -> ComplexVector {
    let v = ComplexVector::from_fn(dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let n = v.norm();
    v.unscale(n)
}

fn min_eig(m: &ComplexMatrix) -> f64 {
    linalg::herm_eigenvalues(m).unwrap()[0]
}

fn max_eig(m: &ComplexMatrix) -> f64 {
    *linalg::herm_eigenvalues(m).unwrap().last().unwrap()
}

fn qobs(args: &[&str]) -> (std::process::Output, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_qobs")).args(args).output().expect("qobs runs");
    (out, start.elapsed())
}

fn layout_dims() -> Check {
    let expected_sens = 4usize.pow(3 * 2);
    let expected_obs = 2usize.pow(2 * 6);
    let cfg = load("paper-dims");
    let start = Instant::now();
    let r = dims_report(&cfg).map_err(|e| e.to_string())?;
    let lib_time = start.elapsed();
    ensure(r.sensory_dim == expected_sens && r.observer_dim == expected_obs, || {
        format!("library dims {} / {}", r.sensory_dim, r.observer_dim)
    })?;
    ensure(lib_time < Duration::from_secs(1), || format!("library took {lib_time:?}"))?;

    let path = fixture_path("paper-dims");
    let path = path.to_str().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out_str = out_dir.path().to_str().unwrap();
    let mut slowest = Duration::ZERO;
    for args in [vec!["dims", "--config", path], vec!["run", "--config", path, "--out", out_str, "--layout-only"]] {
        let (out, time) = qobs(&args);
        ensure(out.status.success(), || format!("qobs {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)))?;
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        ensure(v["sensory_dim"] == expected_sens && v["observer_dim"] == expected_obs, || format!("qobs {} printed {v}", args[0]))?;
        ensure(time < Duration::from_secs(1), || format!("qobs {} took {time:?}", args[0]))?;
        slowest = slowest.max(time);
    }
    Ok(format!("sensory {expected_sens}, observer {expected_obs}; library {lib_time:?}, cli <= {slowest:?}"))
}

fn delta_anchor() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_free: f64 = 0.0;
    let mut count = 0;
    while count < 50 {
        let d = rng.random_range(2..=8);
        let beta_0 = rng.random_range(0.05..0.6);
        let mix = rng.random_range(0.0..0.5);
        let r = random_density(d, d, &mut rng);
        let rho = linalg::identity(d).scale((1.0 - mix) / d as f64) + r.matrix().scale(mix);
        let m = rho.scale(1.0 - beta_0);
        if max_eig(&m) > 1.0 / d as f64 {
            continue;
        }
        let s = solve_delta(&m, beta_0).map_err(|e| e.to_string())?;
        ensure(!s.constrained, || "unconstrained instance reported as constrained".into())?;
        worst_free = worst_free.max((s.delta - d as f64).abs());
        count += 1;
    }
    ensure(worst_free <= 1e-12, || format!("unconstrained |delta - d| = {worst_free:e}"))?;

    let mut worst_scan: f64 = 0.0;
    let mut count = 0;
    while count < 50 {
        let (du, dobs) = ([2, 4][rng.random_range(0..2)], 2);
        let beta_0 = rng.random_range(0.05..0.6);
        let c = random_density(du, rng.random_range(1..=du), &mut rng).into_matrix();
        let o = random_density(dobs, rng.random_range(1..=dobs), &mut rng).into_matrix();
        let c2 = random_density(du, 1, &mut rng).into_matrix();
        let split = rng.random_range(0.2..0.8);
        let bias = BiasStructure {
            beta_0,
            categories: vec![
                CategoryBias { category: "a".into(), beta: (1.0 - beta_0) * split, observers: vec![("o".into(), 1.0)] },
                CategoryBias { category: "b".into(), beta: (1.0 - beta_0) * (1.0 - split), observers: vec![("o".into(), 1.0)] },
            ],
        };
        let povm = assemble_icm_povm(
            &[("a".into(), c), ("b".into(), c2)],
            &[("o".into(), o)],
            &bias,
            SubsystemDims::new(vec![du]).unwrap(),
            SubsystemDims::new(vec![dobs]).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        if !povm.delta.constrained {
            continue;
        }
        let m = match_sum(&povm);
        let scan = delta_scan(&m, beta_0, 1e-4).map_err(|e| e.to_string())?;
        worst_scan = worst_scan.max((scan - povm.delta.delta).abs());
        count += 1;
    }
    ensure(worst_scan <= 1e-4, || format!("constrained |delta - scan| = {worst_scan:e}"))?;
    Ok(format!("50 unconstrained, max |delta - d| = {worst_free:.1e}; 50 constrained, max |delta - scan| = {worst_scan:.1e}"))
}

fn match_sum(povm: &IcmPovm) -> ComplexMatrix {
    let n = povm.dim();
    povm.elements
        .iter()
        .fold(ComplexMatrix::zeros(n, n), |acc, e| acc + linalg::kron(&e.pi_c, &e.pi_o).unwrap().scale(e.beta))
}

fn lindblad_validity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut trace_dev, mut min_e, mut frob): (f64, f64, f64) = (0.0, f64::INFINITY, 0.0);
    for _ in 0..20 {
        let ds = rng.random_range(2..=8);
        let dobs = rng.random_range(2..=4);
        let model = random_model(ds, dobs, &mut rng).map_err(|e| e.to_string())?;
        let rho = random_density(ds, rng.random_range(1..=ds), &mut rng);
        let t = rng.random_range(0.0..5.0);
        let fast = Evolver::new(&model).and_then(|e| e.evolve(&rho, t)).map_err(|e| e.to_string())?;
        let exact = evolve_exact(&rho, &model, t).map_err(|e| e.to_string())?;
        trace_dev = trace_dev.max((fast.trace() - 1.0).abs());
        min_e = min_e.min(fast.min_eigenvalue());
        frob = frob.max(linalg::frobenius_norm(&(fast.matrix() - exact.matrix())));
    }
    ensure(trace_dev <= 1e-9 && min_e >= -1e-7 && frob <= 1e-6, || {
        format!("|Tr - 1| = {trace_dev:e}, min eig = {min_e:e}, ||fast - exact|| = {frob:e}")
    })?;
    Ok(format!("20 models: |Tr - 1| <= {trace_dev:.1e}, min eig >= {min_e:.1e}, ||fast - exact||_F <= {frob:.1e}"))
}

fn analytic_damping() -> Check {
    let (g, tau) = (0.1, 0.5);
    let gamma = 4.0 * g * g * tau;
    let h = linalg::diag_real(&[0.0, 1.0]);
    let sm = linalg::ket_bra(2, 0, 1);
    let terms = vec![
        InteractionTerm::new(C64::new(g, 0.0), sm.clone(), sm.adjoint()),
        InteractionTerm::new(C64::new(g, 0.0), sm.adjoint(), sm.clone()),
    ];
    let model = LindbladModel::new(h.clone(), h, terms, 1e-3, tau, GibbsSign::Minus).map_err(|e| e.to_string())?;
    let excited = pure_state(&ComplexVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]), SubsystemDims::new(vec![2]).unwrap())
        .map_err(|e| e.to_string())?;
    let evolver = Evolver::new(&model).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for x in [0.5, 1.0, 2.0, 5.0] {
        let p = evolver.evolve(&excited, x / gamma).map_err(|e| e.to_string())?.matrix()[(1, 1)].re;
        worst = worst.max((p - (-x as f64).exp()).abs());
    }
    ensure(worst <= 1e-5, || format!("two-level deviation {worst:e}"))?;

    let f = fixture("damping").unwrap();
    let Some(&Expectation::Decay { oscillator, gamma: fg }) = f.expected.iter().find(|e| matches!(e, Expectation::Decay { .. })) else {
        return Err("damping fixture has no decay expectation".into());
    };
    let cfg = load("damping");
    let coupling = &cfg.dynamics.interactions[0];
    let derived = 4.0 * (coupling.g[0].powi(2) + coupling.g[1].powi(2)) * cfg.dynamics.tau_corr;
    ensure((derived - fg).abs() <= 1e-12, || format!("fixture gamma {fg} vs 4 g^2 tau = {derived}"))?;
    let sc = Scenario::prepare(&cfg).map_err(|e| e.to_string())?;
    let layout = sc.layout();
    let k = layout.sensory_oscillators().iter().position(|o| o.label() == oscillator).ok_or("oscillator missing")?;
    let dims: Vec<usize> = layout.sensory_oscillators().iter().map(|o| o.dim).collect();
    let stride: usize = dims[k + 1..].iter().product();
    let evolver = Evolver::new(sc.model()).map_err(|e| e.to_string())?;
    let mut worst_fixture: f64 = 0.0;
    for x in [0.5, 1.0, 2.0, 5.0] {
        let rho = evolver.evolve(sc.initial_sensory_state(), x / fg).map_err(|e| e.to_string())?;
        let p: f64 = (0..rho.dim()).filter(|i| (i / stride) % dims[k] == 1).map(|i| rho.matrix()[(i, i)].re).sum();
        worst_fixture = worst_fixture.max((p - (-x as f64).exp()).abs());
    }
    ensure(worst_fixture <= 1e-5, || format!("damping fixture deviation {worst_fixture:e}"))?;
    Ok(format!("gamma = {gamma}: two-level max deviation {worst:.1e}; damping fixture max deviation {worst_fixture:.1e}"))
}

fn povm_checks<L: Clone + PartialEq>(set: &PovmSet<L>) -> (f64, f64) {
    (set.closure_deviation(), set.min_eigenvalue().unwrap())
}

fn povm_closure() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut closure, mut psd, mut excess): (f64, f64, f64) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    let mut lambdas = 0;
    for eps in [0.5, 0.6, 0.75, 0.9, 1.0] {
        for k in [0.5, 1.0] {
            let (c, p) = povm_checks(&build_strategy_povm(eps, k).map_err(|e| e.to_string())?);
            closure = closure.max(c);
            psd = psd.min(p);
            lambdas += 1;
        }
    }
    let mut povms = Vec::new();
    for name in ["minimal", "damping", "strategy-sweep"] {
        for (_, cfg) in load(name).sweep_points() {
            let sc = Scenario::prepare(&cfg).map_err(|e| e.to_string())?;
            povms.extend(sc.branches().iter().flatten().map(|b| b.povm.clone()));
        }
    }
    for _ in 0..20 {
        let du = [2, 4, 8][rng.random_range(0..3)];
        let beta_0 = rng.random_range(0.01..0.9);
        let cats: Vec<(String, ComplexMatrix)> =
            (0..3).map(|i| (format!("c{i}"), random_density(du, rng.random_range(1..=du), &mut rng).into_matrix())).collect();
        let obs: Vec<(String, ComplexMatrix)> =
            (0..2).map(|i| (format!("o{i}"), random_density(2, rng.random_range(1..=2), &mut rng).into_matrix())).collect();
        let raw: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let bias = BiasStructure {
            beta_0,
            categories: (0..3)
                .map(|i| {
                    let b = raw[2 * i] + raw[2 * i + 1];
                    CategoryBias {
                        category: format!("c{i}"),
                        beta: (1.0 - beta_0) * b / total,
                        observers: vec![("o0".into(), raw[2 * i] / b), ("o1".into(), raw[2 * i + 1] / b)],
                    }
                })
                .collect(),
        };
        let povm = assemble_icm_povm(&cats, &obs, &bias, SubsystemDims::new(vec![du]).unwrap(), SubsystemDims::new(vec![2]).unwrap())
            .map_err(|e| e.to_string())?;
        povms.push(povm);
    }
    for povm in &povms {
        let set = povm.to_povm_set().map_err(|e| e.to_string())?;
        let (c, p) = povm_checks(&set);
        closure = closure.max(c);
        psd = psd.min(p);
        let states: Vec<ComplexMatrix> = (0..50).map(|i| random_density(povm.dim(), 1 + i % povm.dim(), &mut rng).into_matrix()).collect();
        for (i, e) in povm.elements.iter().enumerate() {
            let bound = povm.delta.delta * e.beta;
            let element = povm.element(i + 1).map_err(|e| e.to_string())?;
            excess = excess.max(max_eig(&element) - bound);
            for rho in &states {
                excess = excess.max(linalg::trace_of_product(&element, rho).re - bound);
            }
        }
    }
    ensure(closure <= 1e-9 && psd >= -1e-9 && excess <= 1e-9, || {
        format!("closure {closure:e}, min eig {psd:e}, max p - delta*beta {excess:e}")
    })?;
    Ok(format!(
        "{lambdas} strategy POVMs, {} matching POVMs: closure <= {closure:.1e}, min eig >= {psd:.1e}, max p - delta*beta = {excess:.1e}",
        povms.len()
    ))
}

fn born_sampling() -> Check {
    let mut cfg = load("minimal");
    cfg.run.trials = 100_000;
    let out = run_monte_carlo(&cfg).map_err(|e| e.to_string())?;
    let n = out.records.len() as f64;
    let sum_dev = out.records.iter().map(|r| (r.probabilities.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    ensure(sum_dev <= 1e-9, || format!("probabilities sum off by {sum_dev:e}"))?;
    let labels = &out.summary.labels;
    let mut worst: f64 = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let p = out.records.iter().map(|r| r.probabilities[i]).sum::<f64>() / n;
        let f = out.records.iter().filter(|r| r.outcome == *label).count() as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        let z = if sigma > 0.0 { (f - p).abs() / sigma } else if f == p { 0.0 } else { f64::INFINITY };
        ensure(z <= 3.0, || format!("{label}: frequency {f} vs Born {p} ({z:.2} sigma)"))?;
        worst = worst.max(z);
    }
    Ok(format!("1e5 trials, {} labels, worst deviation {worst:.2} sigma, max |sum p - 1| = {sum_dev:.1e}", labels.len()))
}

/// `(A ⊗ B)` quadratic form of a pure state stored as `ψ[u·d_o + o]`.
fn product_expectation(a: &ComplexMatrix, b: &ComplexMatrix, psi: &ComplexVector) -> f64 {
    let (du, dobs) = (a.nrows(), b.nrows());
    let m = ComplexMatrix::from_fn(du, dobs, |u, o| psi[u * dobs + o]);
    let y = a * &m * b.transpose();
    m.iter().zip(y.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn openness_endpoints() -> Check {
    let base = load("skeptic-sweep");
    let points = base.sweep_points();
    let pick = |eta: f64| points.iter().find(|(_, c)| c.icm.as_ref().unwrap().eta == eta).map(|p| p.1.clone()).ok_or(format!("no eta={eta} point"));
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let believer = Scenario::prepare(&pick(0.0)?).map_err(|e| e.to_string())?;
    let space = believer.feature_space();
    let names = space.names().to_vec();
    let dims = space.dims().to_vec();
    let categories = base.categories.clone();
    let mut max_zero: f64 = 0.0;
    let mut checked = 0;
    for branch in believer.branches().iter().flatten() {
        let povm = &branch.povm;
        for e in &povm.elements {
            let feats = &categories.iter().find(|c| c.name == e.category).unwrap().features;
            let absent: Vec<usize> = (0..names.len()).filter(|&i| !feats.contains(&names[i])).collect();
            let dobs = e.pi_o.nrows();
            for _ in 0..100 {
                let mut psi = random_state(povm.dim(), &mut rng);
                for idx in 0..povm.dim() {
                    let mut u = idx / dobs;
                    let mut ground = true;
                    for f in (0..names.len()).rev() {
                        if absent.contains(&f) && u % dims[f] != 0 {
                            ground = false;
                        }
                        u /= dims[f];
                    }
                    if ground {
                        psi[idx] = C64::new(0.0, 0.0);
                    }
                }
                let n = psi.norm();
                psi.unscale_mut(n);
                let p = povm.delta.delta * e.beta * product_expectation(&e.pi_c, &e.pi_o, &psi);
                max_zero = max_zero.max(p.abs());
                checked += 1;
            }
        }
    }
    ensure(max_zero <= 1e-12, || format!("believer probability {max_zero:e} on states outside the ground sector"))?;

    let skeptic = Scenario::prepare(&pick(1.0)?).map_err(|e| e.to_string())?;
    let mut min_sampled = f64::INFINITY;
    let mut min_bound = f64::INFINITY;
    for branch in skeptic.branches().iter().flatten() {
        let povm = &branch.povm;
        for e in &povm.elements {
            let scale = povm.delta.delta * e.beta;
            min_bound = min_bound.min(scale * min_eig(&e.pi_c) * min_eig(&e.pi_o));
            for _ in 0..100 {
                let psi = random_state(povm.dim(), &mut rng);
                min_sampled = min_sampled.min(scale * product_expectation(&e.pi_c, &e.pi_o, &psi));
            }
        }
    }
    ensure(min_sampled >= 1e-12 && min_bound >= 1e-12, || {
        format!("skeptic minimum probability {min_sampled:e} (spectral bound {min_bound:e})")
    })?;
    Ok(format!(
        "eta=0: max p = {max_zero:.1e} over {checked} restricted states; eta=1: min p = {min_sampled:.2e}, spectral floor {min_bound:.2e}"
    ))
}

fn strategy_endpoints() -> Check {
    let mut exact = 0;
    for k in [0.25, 1.0, 4.0, 8.0] {
        let set = build_strategy_povm(0.5, k).map_err(|e| e.to_string())?;
        let l1 = &set.elements()[0].1;
        ensure(*l1 == linalg::identity(8).scale(k / 8.0), || format!("epsilon = 1/2, k = {k}: Lambda1 is not kI/8"))?;
        exact += 1;
    }
    let set = build_strategy_povm(1.0, 1.0).map_err(|e| e.to_string())?;
    let l1 = &set.elements()[0].1;
    let eig = linalg::herm_eigenvalues(l1).unwrap();
    let rank = eig.iter().filter(|v| v.abs() > 1e-12).count();
    let idempotent = linalg::max_abs(&(l1 * l1 - l1));
    ensure(rank == 1 && idempotent <= 1e-12 && (eig[7] - 1.0).abs() <= 1e-12, || format!("epsilon = 1: rank {rank}, ||L^2 - L|| = {idempotent:e}"))?;

    let mut worst: f64 = 0.0;
    let mut branches = 0;
    for (_, cfg) in load("strategy-sweep").sweep_points() {
        let sc = Scenario::prepare(&cfg).map_err(|e| e.to_string())?;
        for b in sc.branches().iter().flatten() {
            let o = &b.outcome;
            let sdm = o.rho_sdm.matrix();
            ensure((o.sim_weight - sdm[(0, 0)].re).abs() <= 1e-15 && (o.diss_weight - sdm[(1, 1)].re).abs() <= 1e-15, || {
                "weights differ from the sdm diagonal".into()
            })?;
            worst = worst.max((o.sim_weight + o.diss_weight - 1.0).abs());
            branches += 1;
        }
    }
    ensure(worst <= 1e-9, || format!("sim + diss deviates from 1 by {worst:e}"))?;
    Ok(format!("Lambda1 = kI/8 for {exact} values of k; epsilon = 1 rank-1 projector; {branches} sweep branches, max |sim + diss - 1| = {worst:.1e}"))
}

fn template_contracts() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut unitary, mut purity, mut trace, mut psd): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, f64::INFINITY);
    let mut counts = Vec::new();
    for n in [2usize, 4, 8] {
        let gens = pauli_string_generators(n).map_err(|e| e.to_string())?;
        ensure(gens.len() == n * n - 1, || format!("n = {n}: {} generators", gens.len()))?;
        let gram = DMatrix::from_fn(gens.len(), gens.len(), |i, j| linalg::trace_of_product(&gens[i], &gens[j]));
        let expected = DMatrix::from_fn(gens.len(), gens.len(), |i, j| if i == j { C64::new(n as f64, 0.0) } else { C64::new(0.0, 0.0) });
        ensure(linalg::max_abs(&(gram - expected)) <= 1e-12, || format!("n = {n}: generators are not orthogonal"))?;
        ensure(gens.iter().all(|g| linalg::trace(g).norm() <= 1e-12 && linalg::max_abs(&(g - g.adjoint())) <= 1e-15), || {
            format!("n = {n}: generators must be traceless Hermitian")
        })?;
        counts.push(gens.len());
        for sigma in [0.1, 0.5, 2.0] {
            let xi: Vec<f64> = (0..gens.len()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            let u = random_unitary(&xi, &gens).map_err(|e| e.to_string())?;
            unitary = unitary.max(linalg::max_abs(&(u.adjoint() * &u - linalg::identity(n))));
        }
        for dim in [n, n - 1].into_iter().filter(|&d| d >= 2) {
            let proto = random_state(dim, &mut rng);
            let mut spec = CategorySpec::new("c", proto, Vec::new(), 2 * dim);
            spec.xi_covariance = Covariance::Isotropic(0.4);
            for t in sample_templates(&spec, &mut rng).map_err(|e| e.to_string())? {
                let rho = linalg::outer(&t);
                purity = purity.max((linalg::trace_of_product(&rho, &rho).re - 1.0).abs());
            }
            let op = make_category_operator(&spec, &mut rng).map_err(|e| e.to_string())?;
            trace = trace.max((linalg::trace(&op.matrix).re - 1.0).abs());
            psd = psd.min(min_eig(&op.matrix));
        }
    }
    ensure(unitary <= 1e-10 && purity <= 1e-10 && trace <= 1e-10 && psd >= -1e-9, || {
        format!("||U'U - I|| = {unitary:e}, purity dev {purity:e}, trace dev {trace:e}, min eig {psd:e}")
    })?;
    Ok(format!(
        "generators {counts:?}; ||U'U - I|| <= {unitary:.1e}; |purity - 1| <= {purity:.1e}; |Tr - 1| <= {trace:.1e}; min eig >= {psd:.1e}"
    ))
}

fn labels_from_ndjson(dir: &Path) -> Result<Vec<u8>, String> {
    let text = std::fs::read_to_string(dir.join("trials.ndjson")).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        out.extend_from_slice(v["outcome"].as_str().ok_or("record without outcome")?.as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

fn determinism() -> Check {
    let mut cfg = load("minimal");
    cfg.run.trials = 5000;
    let seq = |cfg: &ScenarioConfig| -> Result<Vec<u8>, String> {
        let out = run_monte_carlo(cfg).map_err(|e| e.to_string())?;
        Ok(out.records.iter().flat_map(|r| r.outcome.bytes().chain(std::iter::once(b'\n'))).collect())
    };
    let (a, b) = (seq(&cfg)?, seq(&cfg)?);
    ensure(a == b, || "library label sequences differ".into())?;

    let path = fixture_path("minimal");
    let dir = tempfile::tempdir().unwrap();
    let mut cli = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let (out, _) = qobs(&["run", "--config", path.to_str().unwrap(), "--trials", "2000", "--seed", "99", "--out", out_dir.to_str().unwrap(), "--mkdirs"]);
        ensure(out.status.success(), || format!("qobs run failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        cli.push(labels_from_ndjson(&out_dir)?);
    }
    ensure(cli[0] == cli[1], || "CLI label sequences differ".into())?;
    Ok(format!("library: {} bytes over 5000 trials identical; cli: {} bytes over 2000 trials identical", a.len(), cli[0].len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("layout dimensions", layout_dims),
        ("delta anchor", delta_anchor),
        ("Lindblad validity", lindblad_validity),
        ("analytic damping", analytic_damping),
        ("POVM closure and bounds", povm_closure),
        ("Born sampling consistency", born_sampling),
        ("openness endpoints", openness_endpoints),
        ("strategy endpoints", strategy_endpoints),
        ("template contracts", template_contracts),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

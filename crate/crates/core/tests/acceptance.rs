//! Acceptance suite: one PASS/FAIL line per criterion, details indented below.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchsos::certify::{
    classify, cqlf_bisection, escalate, find_absorbing_lyapunov, find_common_lyapunov, minimize_gamma, verify_certificate,
    AbsorbingSetCertificate, CertificationQuery, SearchOutcome, SwitchedSystem, VerdictKind, VerifyConfig,
};
use switchsos::cli::files::{parse_certificate, parse_system};
use switchsos::poly::{Monomial, Polynomial};
use switchsos::sdp::{self, LinearForm, SdpProblem, SdpStatus, SolverConfig, SymEntry};
use switchsos::sim::{
    adversarial_switching, check_absorption, grid_points, integrate, random_switching, SignalSource, SwitchingSignal,
};
use switchsos::sosprog::{decode, encode, gram_expand, identity_residuals, monomial_basis, SosIdentity, SosProgram};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome { pass, summary: summary.into(), details: Vec::new() }
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.details.push(d.into());
        self
    }

    fn within(mut self, elapsed: Duration, budget: Duration) -> Self {
        if elapsed > budget {
            self.pass = false;
            self.details.push(format!("runtime {:.1} s exceeds the {} s budget", elapsed.as_secs_f64(), budget.as_secs()));
        }
        self
    }
}

fn system(name: &str, params: &[(&str, f64)]) -> SwitchedSystem {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("systems").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let overrides: Vec<(String, f64)> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    parse_system(&text, &overrides).unwrap().system
}

fn published(name: &str) -> AbsorbingSetCertificate {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("systems").join(name);
    parse_certificate(&std::fs::read_to_string(path).unwrap()).unwrap().certificate
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let family = |b: f64| system("iva.sys", &[("b", b)]).linear_matrices().unwrap();
    let cfg = SolverConfig::default();
    match cqlf_bisection(family, 0.5, 10.0, &cfg) {
        Ok(b) => Outcome::new((b - 5.36).abs() <= 0.05, format!("common quadratic Lyapunov function up to b = {:.4}", b))
            .within(t.elapsed(), secs(10)),
        Err(e) => Outcome::new(false, format!("bisection failed: {}", e)),
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let s = system("iva.sys", &[("b", 12.0)]);
    let q = CertificationQuery { homogeneous: true, degree_cap: 12, ..CertificationQuery::new(6, 0.001, 12, 0.0) };
    let found = match find_common_lyapunov(&s, &q) {
        Ok(SearchOutcome::Feasible(sol)) => sol,
        Ok(SearchOutcome::Infeasible { size }) => {
            return Outcome::new(false, format!("degree-12 search infeasible ({} equalities)", size.equalities))
        }
        Err(e) => return Outcome::new(false, format!("degree-12 search failed: {}", e)),
    };
    let verdict = escalate(&s, &q).map_err(|e| e.to_string()).and_then(|r| {
        classify(&s, &r.certificate).map(|v| (v, r.certificate.gamma)).map_err(|e| e.to_string())
    });
    let printed = verify_certificate(&s, &published("iva_deg12.cert"), &VerifyConfig::default());
    let printed_note = match &printed {
        Ok(r) => format!("printed degree-12 V: lyapunov checks {}", if r.lyapunov_checks_passed() { "pass" } else { "fail" }),
        Err(e) => format!("printed degree-12 V: {}", e),
    };
    match verdict {
        Ok((v, gamma)) => Outcome::new(
            v.kind == VerdictKind::GloballyAsymptoticallyStable,
            format!("b = 12, homogeneous deg V = 12: {:?}", v.kind),
        )
        .detail(format!(
            "decrease SDP {} equalities, {} decision variables; margin {:.3e}{}; gamma {:.3e}",
            found.size.equalities,
            found.size.decision_variables,
            found.margin,
            if found.marginal { " (marginal)" } else { "" },
            gamma
        ))
        .detail(printed_note)
        .within(t.elapsed(), secs(300)),
        Err(e) => Outcome::new(false, format!("classification failed: {}", e)).detail(printed_note),
    }
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (sys, cert) in [("ivb.sys", "ivb.cert"), ("ivc.sys", "ivc.cert")] {
        let t = Instant::now();
        let c = published(cert);
        match verify_certificate(&system(sys, &[]), &c, &VerifyConfig::default()) {
            Ok(r) => {
                let worst = r.identities.iter().map(|i| i.residual / i.scale).fold(0.0, f64::max);
                let ok = r.passed() && worst <= 1e-5 && t.elapsed() < secs(30);
                pass &= ok;
                details.push(format!(
                    "{}: beta {} gamma {}: {} (worst scaled residual {:.2e}, containment margin {:.3e}, {:.2} s)",
                    cert,
                    c.beta,
                    c.gamma,
                    if ok { "pass" } else { r.failing_check().unwrap_or("slow") },
                    worst,
                    r.containment_margin,
                    t.elapsed().as_secs_f64()
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("{}: {}", cert, e));
            }
        }
    }
    Outcome { pass, summary: "published certificates verify".into(), details }
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (sys, cert, beta, target) in [("ivb.sys", "ivb.cert", 3.3, 8725.0), ("ivc.sys", "ivc.cert", 2.0, 38.43)] {
        let t = Instant::now();
        let s = system(sys, &[]);
        let cfg = SolverConfig::default();
        let own = match find_absorbing_lyapunov(&s, &CertificationQuery::new(2, 1.0, 4, beta)) {
            Ok(SearchOutcome::Feasible(sol)) => sol.v,
            other => {
                pass = false;
                details.push(format!("{}: no certificate at beta {}: {:?}", sys, beta, other.map(|o| o.size())));
                continue;
            }
        };
        let g_own = minimize_gamma(&s, &own, beta, 2, &cfg).map(|g| g.gamma);
        let g_printed = minimize_gamma(&s, &published(cert).v, beta, 2, &cfg).map(|g| g.gamma);
        let ok = matches!(g_own, Ok(g) if (g - target).abs() <= 0.05 * target) && t.elapsed() < secs(60);
        pass &= ok;
        details.push(format!(
            "{}: gamma from own V {} vs {} ({}); gamma from the printed V {}",
            sys,
            g_own.as_ref().map_or_else(|e| e.to_string(), |g| format!("{:.2}", g)),
            target,
            if ok { "within 5%" } else { "outside 5%" },
            g_printed.map_or_else(|e| e.to_string(), |g| format!("{:.2}", g)),
        ));
    }
    let mut o = Outcome::new(pass, "gamma reproduction with the artifact's own V");
    o.details = details;
    o
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let s = system("ivd.sys", &[]);
    let run = |beta: f64| escalate(&s, &CertificationQuery { degree_cap: 12, ..CertificationQuery::new(2, 1.0, 4, beta) });
    let (bounded, stable) = match (run(5.0), run(0.0)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            return Outcome::new(false, "escalation failed")
                .detail(format!("beta 5: {:?}", a.err()))
                .detail(format!("beta 0: {:?}", b.err()))
        }
    };
    let size = bounded.attempts.last().unwrap().size;
    let ratio = |a: usize, b: f64| a as f64 / b;
    let fits = |r: f64| (1.0 / 1.5..=1.5).contains(&r);
    let direct = (ratio(size.equalities, 444.0), ratio(size.decision_variables, 125.0));
    let transposed = (ratio(size.decision_variables, 444.0), ratio(size.equalities, 125.0));
    let direct_ok = fits(direct.0) && fits(direct.1);
    let transposed_ok = fits(transposed.0) && fits(transposed.1);
    let degrees_ok = bounded.degree == 4 && stable.degree == 6;
    let stable_size = stable.attempts.last().unwrap().size;
    Outcome::new(
        degrees_ok && (direct_ok || transposed_ok),
        format!("escalation stops at deg {} for beta 5 and deg {} for beta 0", bounded.degree, stable.degree),
    )
    .detail(format!(
        "beta 5 decrease SDP: {} equalities, {} decision variables ({} counting full squares)",
        size.equalities, size.decision_variables, size.full_variables
    ))
    .detail(format!(
        "against 444 equalities / 125 decision variables: direct ratios {:.2} / {:.2}, swapped ratios {:.2} / {:.2}; {}",
        direct.0,
        direct.1,
        transposed.0,
        transposed.1,
        if direct_ok {
            "direct reading fits"
        } else if transposed_ok {
            "fits only with the two counts swapped (counting convention differs)"
        } else {
            "no reading fits"
        }
    ))
    .detail(format!(
        "beta 0 decrease SDP at deg 6: {} equalities, {} decision variables; level set SDP at beta 5: {} equalities, {} decision variables",
        stable_size.equalities, stable_size.decision_variables, bounded.level_size.equalities, bounded.level_size.decision_variables
    ))
    .within(t.elapsed(), secs(180))
}

fn absorption(s: &SwitchedSystem, cert: &AbsorbingSetCertificate) -> Result<(usize, usize, usize), String> {
    let starts = grid_points(&[-3.8, -9.5], &[3.8, 9.5], 10);
    let mut signals: Vec<SignalSource> =
        (0..20).map(|k| SignalSource::Fixed(random_switching(2, 20.0, 0.5, k).unwrap())).collect();
    signals.push(SignalSource::Adversarial);
    let r = check_absorption(s, cert, &starts, &signals, 1e-3, 20.0).map_err(|e| e.to_string())?;
    Ok((r.entries.len(), r.entered(), r.violations()))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let s = system("ive.sys", &[]);
    let q = CertificationQuery::new(1, 1e-4, 6, 14.0);
    let outcome = find_absorbing_lyapunov(&s, &q);
    let mut o = match &outcome {
        Ok(SearchOutcome::Feasible(_)) => match escalate(&s, &q) {
            Ok(r) => match absorption(&s, &r.certificate) {
                Ok((n, entered, violations)) => Outcome::new(violations == 0, "beta 14, deg V 6: feasible")
                    .detail(format!("{} trajectories, {} entered, {} re-exit violations", n, entered, violations)),
                Err(e) => Outcome::new(false, format!("absorption check failed: {}", e)),
            },
            Err(e) => Outcome::new(false, format!("level set or verification failed: {}", e)),
        },
        Ok(SearchOutcome::Infeasible { size }) => Outcome::new(false, "beta 14, deg V 6: decrease SDP proven infeasible")
            .detail(format!("{} equalities, {} decision variables", size.equalities, size.decision_variables)),
        Err(e) => Outcome::new(false, format!("beta 14 search failed: {}", e)),
    };
    if !matches!(outcome, Ok(SearchOutcome::Feasible(_))) {
        // Context only: the same pipeline just above the certified threshold.
        let q2 = CertificationQuery::new(1, 1e-4, 6, 14.19);
        match escalate(&s, &q2) {
            Ok(r) => {
                let note = match absorption(&s, &r.certificate) {
                    Ok((n, entered, violations)) => format!("{} trajectories, {} entered, {} violations", n, entered, violations),
                    Err(e) => e,
                };
                o = o.detail(format!("context: beta 14.19 certifies with gamma {:.2}; absorption: {}", r.certificate.gamma, note));
            }
            Err(e) => o = o.detail(format!("context: beta 14.19 failed: {}", e)),
        }
    }
    o.within(t.elapsed(), secs(180))
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let s = system("iva.sys", &[("b", 13.26)]);
    let v = Polynomial::from_terms(2, [(Monomial::new(vec![2, 0]), 1.0), (Monomial::new(vec![0, 2]), 1.0)]);
    let x0 = [1.0, 0.0];
    let result = adversarial_switching(&s, &v, &x0, 1e-3, 50.0).and_then(|sig| integrate(&s, &sig, &x0, 1e-3, 50.0).map(|tr| (sig, tr)));
    match result {
        Ok((sig, tr)) => {
            let norm = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>().sqrt();
            let growth = norm(tr.final_state());
            let peak = tr.states.iter().map(|x| norm(x)).fold(0.0, f64::max);
            Outcome::new(growth >= 10.0, format!("norm growth over T = 50: {:.3}x", growth))
                .detail(format!("{} switches, peak norm {:.3}, diverged: {}", sig.switch_count(), peak, tr.diverged()))
                .within(t.elapsed(), secs(10))
        }
        Err(e) => Outcome::new(false, format!("simulation failed: {}", e)),
    }
}

fn random_poly(rng: &mut ChaCha8Rng, dim: usize, max_deg: u32, terms: usize) -> Polynomial {
    Polynomial::from_terms(
        dim,
        (0..terms).map(|_| {
            let mut e = vec![0u32; dim];
            let d = rng.random_range(0..=max_deg);
            for _ in 0..d {
                e[rng.random_range(0..dim)] += 1;
            }
            (Monomial::new(e), rng.random_range(-2.0..2.0))
        }),
    )
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

fn algebra_suite() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let dim = rng.random_range(1..=3);
        let p = random_poly(&mut rng, dim, 3, 5);
        let q = random_poly(&mut rng, dim, 3, 5);
        let r = random_poly(&mut rng, dim, 2, 4);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let e = |f: &Polynomial| f.eval_unchecked(&x);
        let checks = [
            (&p + &q) == (&q + &p),
            ((&p * &q) - (&q * &p)).max_abs_coefficient() <= 1e-12,
            ((&(&p + &q) * &r) - (&(&p * &r) + &(&q * &r))).max_abs_coefficient() <= 1e-12,
            ((&(&p * &q) * &r) - (&p * &(&q * &r))).max_abs_coefficient() <= 1e-10,
            (&p - &p).is_zero(),
            close(e(&(&p * &q)), e(&p) * e(&q), 1e-12),
            close(e(&p.pow(3)), e(&p).powi(3), 1e-11),
            (&p * &q).degree() <= p.degree() + q.degree(),
        ];
        if let Some(k) = checks.iter().position(|c| !c) {
            return Err(format!("algebra case {} check {} failed", case, k));
        }
    }
    Ok(200)
}

fn gradient_suite() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut count = 0;
    for case in 0..100 {
        let dim = rng.random_range(1..=3);
        let p = random_poly(&mut rng, dim, 4, 6);
        let grad = p.gradient();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (j, g) in grad.iter().enumerate() {
            let h = 1e-5;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.eval_unchecked(&xp) - p.eval_unchecked(&xm)) / (2.0 * h);
            let exact = g.eval_unchecked(&x);
            let scale = 1.0 + exact.abs() + p.max_abs_coefficient();
            if (fd - exact).abs() > 1e-5 * scale {
                return Err(format!("gradient case {} coordinate {}: {} vs {}", case, j, exact, fd));
            }
            count += 1;
        }
    }
    Ok(count)
}

fn gram_suite() -> Result<(usize, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = SolverConfig::default().tightened(1e-2);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let dim = rng.random_range(1..=3);
        let d = rng.random_range(1..=if dim == 3 { 2 } else { 3 });
        let basis = monomial_basis(dim, 0, d);
        let k = basis.len();
        let g = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let r = &g * g.transpose() / k as f64 + DMatrix::identity(k, k) * 0.05;
        let p = gram_expand(&basis, &r).map_err(|e| e.to_string())?;
        let mut prog = SosProgram::new(dim);
        prog.add_identity(SosIdentity::new("planted", p));
        let enc = encode(&prog).map_err(|e| e.to_string())?;
        let sol = sdp::solve(&enc.problem, &cfg).map_err(|e| e.to_string())?;
        let dec = decode(&prog, &enc, &sol).map_err(|e| format!("case {}: {}", case, e))?;
        let res = identity_residuals(&prog, &dec).map_err(|e| e.to_string())?;
        let rel = res[0].relative();
        worst = worst.max(rel);
        if rel > 1e-6 {
            return Err(format!("gram case {}: scaled residual {:.2e}", case, rel));
        }
    }
    Ok((100, worst))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

/// Problem with a planted strictly feasible `X0`, and optionally a planted dual point `(y0, Z0)`.
fn planted(seed: u64, with_objective: bool) -> (SdpProblem, Vec<DMatrix<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=10)).collect();
    let max_m = blocks.iter().map(|n| n * (n + 1) / 2).sum::<usize>().min(50);
    let m = rng.random_range(1..=max_m);
    let x0: Vec<DMatrix<f64>> = blocks.iter().map(|&n| random_spd(&mut rng, n)).collect();
    let mut problem = SdpProblem::new(blocks.clone(), 0);
    let mut dense: Vec<Vec<DMatrix<f64>>> = Vec::new();
    for _ in 0..m {
        let mut form = LinearForm::default();
        let mut mats: Vec<DMatrix<f64>> = blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for _ in 0..rng.random_range(1..=8) {
            let b = rng.random_range(0..blocks.len());
            let (r, c) = (rng.random_range(0..blocks[b]), rng.random_range(0..blocks[b]));
            let v = rng.random_range(-1.0..1.0);
            form.entries.push(SymEntry::new(b, r, c, v));
            mats[b][(r, c)] += v;
            if r != c {
                mats[b][(c, r)] += v;
            }
        }
        let rhs = form.evaluate(&x0, &[]);
        problem.add_constraint(form, rhs);
        dense.push(mats);
    }
    let mut y0 = vec![0.0; m];
    if with_objective {
        y0.iter_mut().for_each(|y| *y = rng.random_range(-1.0..1.0));
        for (b, &n) in blocks.iter().enumerate() {
            let mut c = random_spd(&mut rng, n);
            for (j, mats) in dense.iter().enumerate() {
                c += &mats[b] * y0[j];
            }
            for r in 0..n {
                for col in r..n {
                    problem.objective.entries.push(SymEntry::new(b, r, col, c[(r, col)]));
                }
            }
        }
    }
    (problem, x0, y0)
}

fn sdp_suite() -> Result<usize, String> {
    let cfg = SolverConfig::default();
    let mut count = 0;
    for seed in 0..40 {
        let (p, _, _) = planted(seed, false);
        let sol = sdp::solve(&p, &cfg).map_err(|e| e.to_string())?;
        if sol.status != SdpStatus::Feasible {
            return Err(format!("planted feasible seed {} classified {:?}", seed, sol.status));
        }
        count += 1;
    }
    for seed in 100..130 {
        let (p, x0, y0) = planted(seed, true);
        let sol = sdp::solve(&p, &cfg).map_err(|e| e.to_string())?;
        if sol.status != SdpStatus::Optimal {
            return Err(format!("planted optimization seed {} classified {:?}", seed, sol.status));
        }
        let upper = p.objective_value(&x0, &[]);
        let lower: f64 = p.constraints.iter().zip(&y0).map(|(c, y)| c.rhs * y).sum();
        let tol = 1e-6 * (1.0 + upper.abs());
        if sol.primal_objective < sol.dual_objective - tol || sol.primal_objective > upper + tol || sol.dual_objective < lower - tol {
            return Err(format!(
                "seed {}: primal {} dual {} planted bounds [{}, {}]",
                seed, sol.primal_objective, sol.dual_objective, lower, upper
            ));
        }
        count += 1;
    }
    for seed in 200..230 {
        let (mut p, _, _) = planted(seed, false);
        let nb = p.blocks.len();
        let mut form = LinearForm::default();
        for (b, &n) in p.blocks.clone().iter().enumerate() {
            form.entries.extend((0..n).map(|i| SymEntry::new(b, i, i, 1.0)));
        }
        p.blocks.push(1);
        form.entries.push(SymEntry::new(nb, 0, 0, 1.0));
        p.add_constraint(form, -1.0);
        let sol = sdp::solve(&p, &cfg).map_err(|e| e.to_string())?;
        if sol.status != SdpStatus::Infeasible {
            return Err(format!("planted infeasible seed {} classified {:?}", seed, sol.status));
        }
        count += 1;
    }
    Ok(count)
}

fn rk4_suite() -> Result<Vec<f64>, String> {
    let s = system("ive.sys", &[]);
    let x0 = [1.0, 0.5];
    let reference = integrate(&s, &SwitchingSignal::constant(1, 1.0).unwrap(), &x0, 1e-4, 1.0).unwrap();
    let exact = reference.final_state().to_vec();
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let t = integrate(&s, &SwitchingSignal::constant(1, 1.0).unwrap(), &x0, h, 1.0).unwrap();
            t.final_state().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    if ratios.iter().all(|r| (4.0..=64.0).contains(r)) {
        Ok(ratios)
    } else {
        Err(format!("error ratios {:?} outside [4, 64]", ratios))
    }
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    let mut record = |name: &str, r: Result<String, String>| {
        pass &= r.is_ok();
        details.push(match r {
            Ok(s) => format!("{}: pass ({})", name, s),
            Err(e) => format!("{}: FAIL ({})", name, e),
        });
    };
    record("polynomial algebra", algebra_suite().map(|n| format!("{} random cases", n)));
    record("gradient vs central differences", gradient_suite().map(|n| format!("{} partials within 1e-5", n)));
    record("Gram expansion residuals", gram_suite().map(|(n, w)| format!("{} instances, worst scaled residual {:.2e}", n, w)));
    record("SDP planted classification and weak duality", sdp_suite().map(|n| format!("{}/{} classified", n, n)));
    record("RK4 order", rk4_suite().map(|r| format!("halving ratios {:.2?}", r)));
    Outcome { pass, summary: "property suites".into(), details }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("CQLF threshold", criterion_1),
        ("high-degree GAS", criterion_2),
        ("published certificates", criterion_3),
        ("gamma reproduction", criterion_4),
        ("degree trade-off", criterion_5),
        ("limit-cycle containment", criterion_6),
        ("falsification", criterion_7),
        ("property suites", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{}] {}: {} ({:.2} s)", k + 1, status, name, o.summary, t.elapsed().as_secs_f64());
        for d in &o.details {
            println!("    {}", d);
        }
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

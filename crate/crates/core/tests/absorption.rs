use std::path::Path;

use switchsos::certify::{verify_certificate, AbsorbingSetCertificate, SwitchedSystem, VerifyConfig};
use switchsos::cli::files::{parse_certificate, parse_system};
use switchsos::sim::{check_absorption, grid_points, random_switching, SignalSource};

fn load(sys: &str, cert: &str) -> (SwitchedSystem, Vec<f64>, Vec<f64>, AbsorbingSetCertificate) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("systems");
    let f = parse_system(&std::fs::read_to_string(dir.join(sys)).unwrap(), &[]).unwrap();
    let mut c = parse_certificate(&std::fs::read_to_string(dir.join(cert)).unwrap()).unwrap().certificate;
    c.report = Some(verify_certificate(&f.system, &c, &VerifyConfig::default()).unwrap());
    assert!(c.verified(), "{}", cert);
    let window = f.window.unwrap();
    let lo = window.iter().map(|w| w.0).collect();
    let hi = window.iter().map(|w| w.1).collect();
    (f.system, lo, hi, c)
}

#[test]
fn three_offsets_never_leave_the_level_set() {
    let (system, lo, hi, cert) = load("ivc.sys", "ivc.cert");
    let starts = grid_points(&lo, &hi, 3);
    let mut signals: Vec<SignalSource> =
        (0..100).map(|s| SignalSource::Fixed(random_switching(system.len(), 10.0, 0.5, s).unwrap())).collect();
    signals.push(SignalSource::Adversarial);
    let report = check_absorption(&system, &cert, &starts, &signals, 1e-3, 10.0).unwrap();
    assert_eq!(report.entries.len(), 9 * 101);
    assert_eq!(report.violations(), 0);
    assert_eq!(report.entered(), report.entries.len());
}

#[test]
fn affine_pair_never_leaves_the_level_set() {
    let (system, lo, hi, cert) = load("ivb.sys", "ivb.cert");
    let starts = grid_points(&lo, &hi, 5);
    let mut signals: Vec<SignalSource> =
        (0..20).map(|s| SignalSource::Fixed(random_switching(system.len(), 10.0, 0.5, s).unwrap())).collect();
    signals.push(SignalSource::Adversarial);
    let report = check_absorption(&system, &cert, &starts, &signals, 1e-3, 10.0).unwrap();
    assert_eq!(report.violations(), 0);
    // Starts inside the set register entry at t = 0.
    assert!(report.entries.iter().any(|e| e.first_entry == Some(0.0)));
}

#[test]
fn unverified_certificate_is_rejected() {
    let (system, lo, hi, mut cert) = load("ivb.sys", "ivb.cert");
    cert.report = None;
    let starts = grid_points(&lo, &hi, 2);
    assert!(check_absorption(&system, &cert, &starts, &[SignalSource::Adversarial], 1e-3, 1.0).is_err());
}

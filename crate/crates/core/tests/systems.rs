use std::path::Path;

use switchsos::cli::files::{parse_certificate, parse_system};

fn read(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("systems").join(name)).unwrap()
}

#[test]
fn bundled_systems_parse() {
    // (file, dim, subsystems, all linear, shared equilibrium at the origin)
    let expected = [
        ("iva.sys", 2, 2, true, true),
        ("ivb.sys", 2, 2, false, false),
        ("ivc.sys", 2, 3, false, false),
        ("ivd.sys", 3, 2, false, true),
        ("ive.sys", 2, 2, false, true),
    ];
    for (name, dim, n, linear, origin) in expected {
        let f = parse_system(&read(name), &[]).unwrap();
        assert_eq!(f.system.dim(), dim, "{}", name);
        assert_eq!(f.system.len(), n, "{}", name);
        assert_eq!(f.system.all_linear(), linear, "{}", name);
        assert_eq!(f.system.origin_violation().is_none(), origin, "{}", name);
        assert_eq!(f.window.as_ref().map(Vec::len), Some(dim), "{}", name);
    }
}

#[test]
fn bundled_certificates_parse() {
    for (name, dim, degree) in [("iva_deg12.cert", 2, 12), ("ivb.cert", 2, 4), ("ivc.cert", 2, 4)] {
        let c = parse_certificate(&read(name)).unwrap();
        assert_eq!(c.dim, dim);
        assert_eq!(c.certificate.v.degree(), degree);
        assert_eq!(c.certificate.v.min_degree(), degree, "{} is homogeneous", name);
    }
}

#[test]
fn affine_offsets_match_equilibria() {
    let f = parse_system(&read("ivb.sys"), &[]).unwrap();
    let x = [-0.0, 0.0];
    let d = f.system.subsystems()[1].evaluate(&x).unwrap();
    assert_eq!(d, vec![1.0, 1.0]);
    let g = parse_system(&read("ivc.sys"), &[]).unwrap();
    let offsets: Vec<Vec<f64>> = g.system.subsystems().iter().map(|s| s.evaluate(&[0.0, 0.0]).unwrap()).collect();
    assert_eq!(offsets, vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0]]);
}

#![allow(dead_code)]

use std::path::PathBuf;

use opfcert::case_io::{load_case, read_points, PointsFile};
use opfcert::certify::CertPoint;
use opfcert::network::NetworkCase;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn case(name: &str) -> NetworkCase {
    load_case(data(&format!("cases/{name}.m"))).unwrap()
}

pub fn points(name: &str) -> PointsFile {
    read_points(data(&format!("points/{name}.json"))).unwrap()
}

/// Endpoints A and B of a points file, as given (not yet validated).
pub fn endpoints(case: &NetworkCase, name: &str) -> (CertPoint, CertPoint, Option<f64>) {
    let f = points(name);
    (f.a.to_cert_point(case).unwrap(), f.b.to_cert_point(case).unwrap(), f.lambda)
}

/// (case file, points file) of the fixtures small enough for brute-force checks.
pub const SMALL: [(&str, &str); 5] = [
    ("threebus_cyclic", "threebus_cyclic"),
    ("threebus_acyclic", "threebus_acyclic"),
    ("fivebus", "fivebus"),
    ("wb5", "wb5"),
    ("case9mod", "case9mod"),
];

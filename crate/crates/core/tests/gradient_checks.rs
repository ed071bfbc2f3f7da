//! Backward passes of the scoring heads, the packed encoder and a full joint
//! training step compared with central finite differences.

mod common;

use common::{grad_cases, max_rel_err, Probe, GRAD_TOL};

fn assert_close(what: &str, probes: &[Probe]) {
    assert!(probes.len() >= 20, "{what}: only {} live probes", probes.len());
    let worst = max_rel_err(probes);
    assert!(worst < GRAD_TOL, "{what}: relative error {worst:.2e}\n{probes:#?}");
}

#[test]
fn token_head() {
    assert_close("token head", &grad_cases::token_head());
}

#[test]
fn span_head() {
    assert_close("span head", &grad_cases::span_head());
}

#[test]
fn packed_encoder_readout() {
    let probes = grad_cases::packed_encoder_readout();
    assert_close("packed encoder", &probes);
    assert!(
        probes.iter().any(|p| p.param.starts_with("encoder")),
        "no encoder probe"
    );
}

#[test]
fn joint_document_step() {
    let probes = grad_cases::joint_document_step();
    assert_close("joint step", &probes);
    for prefix in ["encoder", "proposal", "linking"] {
        assert!(probes.iter().any(|p| p.param.starts_with(prefix)), "no {prefix} probe");
    }
}

//! Exercise the C ABI through the exported symbols, the way a foreign
//! caller would.

use std::ffi::{CStr, CString};
use std::ptr;

use divprice_capi::*;

fn make_instance(json: &str) -> *mut DpInstance {
    let json = CString::new(json).unwrap();
    let mut handle: *mut DpInstance = ptr::null_mut();
    let status = unsafe { dp_instance_from_json(json.as_ptr(), &mut handle) };
    assert_eq!(status, DpStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn version_string_round_trips() {
    let s = dp_version();
    assert!(!s.is_null());
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    assert!(!text.is_empty());
    unsafe { dp_string_free(s) };
}

#[test]
fn constants_match_known_values() {
    let (mut beta, mut rho1, mut rho2) = (0.0, 0.0, 0.0);
    let status = unsafe { dp_constants(&mut beta, &mut rho1, &mut rho2) };
    assert_eq!(status, DpStatus::Ok);
    assert!((beta - 0.872453).abs() < 1e-6);
    assert!((rho1 - 0.317844).abs() < 1e-6);
    assert!((rho2 - 0.41906).abs() < 1e-5);
}

#[test]
fn null_pointers_are_rejected_with_message() {
    let status = unsafe { dp_constants(ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, DpStatus::NullPointer);
    let msg = dp_last_error_message();
    assert!(!msg.is_null());
    let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_string();
    assert!(text.contains("null"), "{text}");
    unsafe { dp_string_free(msg) };
}

#[test]
fn instance_lifecycle_and_estimates() {
    let inst = make_instance(
        r#"[{"kind": "power", "a": 1.0, "c": 0.5},
            {"kind": "finite_support", "atoms": [
                {"valuation": {"kind": "linear", "a": 0.5}, "prob": 0.5},
                {"valuation": {"kind": "linear", "a": 2.0}, "prob": 0.5}]}]"#,
    );
    let mut agents = 0usize;
    assert_eq!(
        unsafe { dp_instance_agent_count(inst, &mut agents) },
        DpStatus::Ok
    );
    assert_eq!(agents, 2);

    let (mut mean, mut stderr) = (0.0, 0.0);
    let status = unsafe { dp_sold_fraction(inst, 0.0, 100, 7, &mut mean, &mut stderr) };
    assert_eq!(status, DpStatus::Ok);
    assert_eq!(mean, 1.0);

    let mut ratio = DpWelfareRatio {
        ratio: 0.0,
        ratio_stderr: 0.0,
        welfare: 0.0,
        optimal_welfare: 0.0,
    };
    let status =
        unsafe { dp_welfare_ratio(inst, 0.8, DpOrdering::UniformRandom, 5_000, 7, &mut ratio) };
    assert_eq!(status, DpStatus::Ok);
    assert!(
        ratio.ratio > 0.3 && ratio.ratio <= 1.0 + 1e-12,
        "ratio {}",
        ratio.ratio
    );

    unsafe { dp_instance_free(inst) };
}

#[test]
fn calibration_through_the_abi() {
    let inst = make_instance(r#"[{"kind": "power", "a": 1.0, "c": 0.5}]"#);
    let mut cal = DpCalibration {
        price: 0.0,
        achieved: 0.0,
        target: 0.0,
        residual: 0.0,
        target_unreachable: true,
    };
    let status = unsafe { dp_calibrate(inst, 0.25, 500, 3, 1e-6, 1e3, &mut cal) };
    assert_eq!(status, DpStatus::Ok);
    assert!(!cal.target_unreachable);
    assert!((cal.price - 1.0).abs() < 1e-3, "price {}", cal.price);
    unsafe { dp_instance_free(inst) };
}

#[test]
fn revenue_gap_and_lower_bound() {
    let inst = make_instance(r#"[{"kind": "linear", "a": 1.0}]"#);
    let mut gap = DpRevenueGap {
        upper_bound: 0.0,
        best_linear_revenue: 0.0,
        best_linear_price: 0.0,
        gap: 0.0,
        kappa: 0.0,
        certificate: 0.0,
        regular: false,
        certificate_holds: false,
    };
    let status = unsafe { dp_revenue_gap(inst, 64, 1, 0, &mut gap) };
    assert_eq!(status, DpStatus::Ok);
    assert!((gap.gap - 1.0).abs() < 1e-9);
    assert!(gap.regular && gap.certificate_holds);
    unsafe { dp_instance_free(inst) };

    let mut lb = DpLowerBound {
        kappa: 0.0,
        rho: 0.0,
        best_linear_revenue: 0.0,
        best_linear_price: 0.0,
        nonlinear_revenue: 0.0,
        gap: 0.0,
        floor: 0.0,
    };
    let status = unsafe { dp_lower_bound(std::f64::consts::E, &mut lb) };
    assert_eq!(status, DpStatus::Ok);
    assert!(lb.gap >= 2.0 - 1e-6);

    // Domain error: curvature must exceed 1.
    let status = unsafe { dp_lower_bound(0.5, &mut lb) };
    assert_eq!(status, DpStatus::DomainError);
    let msg = dp_last_error_message();
    assert!(!msg.is_null());
    unsafe { dp_string_free(msg) };
}

#[test]
fn parse_errors_are_reported() {
    let json = CString::new("not json").unwrap();
    let mut handle: *mut DpInstance = ptr::null_mut();
    let status = unsafe { dp_instance_from_json(json.as_ptr(), &mut handle) };
    assert_eq!(status, DpStatus::ParseError);
    assert!(handle.is_null());

    // Unknown field is named in the message.
    let json = CString::new(r#"[{"kind": "linear", "a": 1.0, "oops": 2}]"#).unwrap();
    let status = unsafe { dp_instance_from_json(json.as_ptr(), &mut handle) };
    assert_eq!(status, DpStatus::ParseError);
    let msg = dp_last_error_message();
    let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_string();
    assert!(text.contains("oops"), "{text}");
    unsafe { dp_string_free(msg) };

    // Invalid parameters surface as domain errors.
    let json = CString::new(r#"[{"kind": "log_cap", "kappa": 0.7}]"#).unwrap();
    let status = unsafe { dp_instance_from_json(json.as_ptr(), &mut handle) };
    assert_eq!(status, DpStatus::DomainError);
}

#[test]
fn generated_header_contains_the_surface() {
    let header = include_str!("../include/divprice.h");
    for symbol in [
        "dp_version",
        "dp_constants",
        "dp_instance_from_json",
        "dp_instance_free",
        "dp_sold_fraction",
        "dp_calibrate",
        "dp_welfare_ratio",
        "dp_revenue_gap",
        "dp_lower_bound",
        "dp_last_error_message",
        "dp_string_free",
        "DpInstance",
        "DpStatus",
    ] {
        assert!(header.contains(symbol), "header misses {symbol}");
    }
}

#[test]
fn generated_header_is_valid_c() {
    let dir = tempfile::tempdir().unwrap();
    let main_c = dir.path().join("smoke.c");
    std::fs::write(
        &main_c,
        "#include <stdio.h>\n#include \"divprice.h\"\nint main(void) { return (int)DP_STATUS_OK; }\n",
    )
    .unwrap();
    let include_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(&include_dir)
        .arg(&main_c)
        .status()
        .expect("cc available");
    assert!(status.success(), "generated header does not compile as C");
}

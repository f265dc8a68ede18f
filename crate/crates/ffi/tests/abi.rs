use std::ffi::c_char;
use std::process::Command;
use std::ptr;

use superatom_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { sa_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn model() -> *mut SaModel {
    let mut m = ptr::null_mut();
    let st = unsafe { sa_model_new(0.55, 0.04, 0.05, 3.4, 0.0, 6.0, 0.3, &mut m) };
    assert_eq!(st, SaStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn invalid_model_sets_status_and_message() {
    let mut m = ptr::null_mut();
    let st = unsafe { sa_model_new(-1.0, 0.04, 0.05, 3.4, 0.0, 6.0, 0.3, &mut m) };
    assert_eq!(st, SaStatus::InvalidParameter);
    assert!(m.is_null());
    assert!(last_error().contains("kappa"));
}

#[test]
fn null_output_is_reported() {
    let st = unsafe { sa_model_new(0.55, 0.04, 0.05, 3.4, 0.0, 6.0, 0.3, ptr::null_mut()) };
    assert_eq!(st, SaStatus::NullPointer);
}

#[test]
fn rates_and_correlators() {
    let m = model();
    let times = [1.0, 2.0, 3.0];
    let (mut inp, mut out) = ([0.0; 3], [0.0; 3]);
    unsafe {
        assert_eq!(sa_model_rates(m, times.as_ptr(), 3, inp.as_mut_ptr(), out.as_mut_ptr()), SaStatus::Ok);
        assert!((inp[1] - 3.4).abs() < 1e-12);
        assert!(out.iter().all(|&r| r > 0.0 && r.is_finite()), "{out:?}");

        let mut g1 = 0.0;
        assert_eq!(sa_model_correlator(m, 1, times.as_ptr().add(1), &mut g1), SaStatus::Ok);
        assert!((g1 - out[1]).abs() < 1e-6 * out[1]);

        let mut g3 = 0.0;
        assert_eq!(sa_model_normalized(m, 3, times.as_ptr(), &mut g3), SaStatus::Ok);
        assert!(g3.is_finite() && g3 > 0.0);

        assert_eq!(sa_model_normalized(m, 4, times.as_ptr(), &mut g3), SaStatus::UnsupportedOrder);
        sa_model_free(m);
    }
}

#[test]
fn simulation_roundtrip_is_deterministic() {
    let m = model();
    let run = || unsafe {
        let mut set = ptr::null_mut();
        assert_eq!(sa_simulate(m, 200, 7, 0.05, 2, &mut set), SaStatus::Ok);
        let mut total = 0usize;
        assert_eq!(sa_click_set_total(set, &mut total), SaStatus::Ok);
        assert!(total > 0);
        let mut ids = vec![0u32; total];
        let mut ts = vec![0.0; total];
        let mut ch = vec![0u8; total];
        assert_eq!(
            sa_click_set_copy(set, ids.as_mut_ptr(), ts.as_mut_ptr(), ch.as_mut_ptr(), total - 1),
            SaStatus::Inconsistent
        );
        assert_eq!(
            sa_click_set_copy(set, ids.as_mut_ptr(), ts.as_mut_ptr(), ch.as_mut_ptr(), total),
            SaStatus::Ok
        );
        sa_click_set_free(set);
        (ids, ts, ch)
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.0.windows(2).all(|w| w[0] <= w[1]));
    assert!(a.1.iter().all(|&t| (0.0..=6.0).contains(&t)));
    assert!(a.2.iter().all(|&c| c < 2));
    unsafe { sa_model_free(m) };
}

#[test]
fn ideal_model_entry_points() {
    let mut c = SaIdealCorrelations::default();
    unsafe {
        assert_eq!(sa_ideal_correlations(0.0, 0.0, 0.0, 1.0, &mut c), SaStatus::Ok);
        assert!((c.g2[0] - 9.0).abs() < 1e-12);
        assert!((c.g3 - 25.0).abs() < 1e-12);
        let mut g3c = 0.0;
        assert_eq!(sa_connected_g3(c.g3, c.g2.as_ptr(), &mut g3c), SaStatus::Ok);
        assert!((g3c - c.g3_connected).abs() < 1e-12);
        assert_eq!(sa_ideal_correlations(0.0, 0.0, 0.0, 0.0, &mut c), SaStatus::Domain);

        let mut j = SaJacobi::default();
        assert_eq!(sa_to_jacobi(1.0, 1.0, 1.0, &mut j), SaStatus::Ok);
        assert!((j.r - 3f64.sqrt()).abs() < 1e-12 && j.eta.abs() < 1e-12 && j.zeta.abs() < 1e-12);

        let coords = [0.0];
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(
            sa_bethe_gaussian_wavefunction(1, 0.0, 2.0, 1.0, coords.as_ptr(), &mut re, &mut im),
            SaStatus::Ok
        );
        assert!(re.is_finite() && im.is_finite());
    }
}

#[test]
fn error_message_truncates() {
    unsafe { sa_ideal_correlations(0.0, 0.0, 0.0, -1.0, &mut SaIdealCorrelations::default()) };
    let mut small = [0x7f as c_char; 4];
    let full = unsafe { sa_last_error_message(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(small[3], 0);
    assert_eq!(unsafe { sa_last_error_message(ptr::null_mut(), 0) }, full);
}

#[test]
fn header_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = format!("{dir}/include/superatom.h");
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", &header])
        .output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["sa_model_new", "sa_simulate", "sa_click_set_free", "sa_last_error_message", "SA_STATUS_PANIC"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
}

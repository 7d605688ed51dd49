use std::ffi::{CStr, CString};
use std::ptr;

use softcheck::network::init_params;
use softcheck::{Activation, ChecksumSpec, ModelFile};
use softcheck_ffi::*;

fn last_error() -> String {
    let p = softcheck_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn saved_model(dir: &tempfile::TempDir) -> (CString, ModelFile) {
    let params = init_params(&[3, 5, 3], Activation::Tanh, 11).unwrap();
    let file = ModelFile::new(params, ChecksumSpec::Sinusoid { w: 0.5 });
    let path = dir.path().join("model.json");
    file.save(&path).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), file)
}

#[test]
fn load_forward_and_score_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, file) = saved_model(&dir);
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { softcheck_model_load(path.as_ptr(), &mut model) }, SoftcheckStatus::Ok);

    let (mut d, mut k) = (0, 0);
    unsafe {
        assert_eq!(softcheck_model_input_dim(model, &mut d), SoftcheckStatus::Ok);
        assert_eq!(softcheck_model_output_dim(model, &mut k), SoftcheckStatus::Ok);
    }
    assert_eq!((d, k), (3, 2));

    let x = [0.1, -0.4, 0.9, 1.5, 0.0, -2.0];
    let mut y_hat = [0.0; 4];
    let mut c_hat = [0.0; 2];
    let mut errs = [0.0; 2];
    unsafe {
        let st = softcheck_model_forward(model, x.as_ptr(), 2, 3, y_hat.as_mut_ptr(), c_hat.as_mut_ptr());
        assert_eq!(st, SoftcheckStatus::Ok);
        let st = softcheck_model_checksum_errors(model, x.as_ptr(), 2, 3, errs.as_mut_ptr());
        assert_eq!(st, SoftcheckStatus::Ok);
    }
    let xm = softcheck::Matrix::from_vec(2, 3, x.to_vec()).unwrap();
    let expect = file.params.forward(&xm).unwrap();
    assert_eq!(&y_hat[..], expect.y_hat.as_slice());
    assert_eq!(&c_hat[..], &expect.c_hat[..]);
    for r in 0..2 {
        let e = softcheck::checksum_error(c_hat[r], expect.y_hat.row(r), &file.checksum).unwrap();
        assert_eq!(errs[r], e);
    }
    unsafe { softcheck_model_free(model) };
}

#[test]
fn wrong_width_reports_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = saved_model(&dir);
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(softcheck_model_load(path.as_ptr(), &mut model), SoftcheckStatus::Ok);
        let x = [0.0; 4];
        let mut y = [0.0; 4];
        let mut c = [0.0; 2];
        let st = softcheck_model_forward(model, x.as_ptr(), 2, 2, y.as_mut_ptr(), c.as_mut_ptr());
        assert_eq!(st, SoftcheckStatus::Shape);
        softcheck_model_free(model);
    }
    assert!(!last_error().is_empty());
}

#[test]
fn missing_file_and_null_pointers() {
    let path = CString::new("/nonexistent/softcheck/model.json").unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(softcheck_model_load(path.as_ptr(), &mut model), SoftcheckStatus::Io);
        assert!(model.is_null());
        assert_eq!(softcheck_model_load(ptr::null(), &mut model), SoftcheckStatus::NullPointer);
        let mut d = 0;
        assert_eq!(softcheck_model_input_dim(ptr::null(), &mut d), SoftcheckStatus::NullPointer);
        softcheck_model_free(ptr::null_mut());
    }
    assert!(last_error().contains("null"));
}

#[test]
fn corrupt_model_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ not json").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { softcheck_model_load(path.as_ptr(), &mut model) }, SoftcheckStatus::Parse);
}

#[test]
fn threshold_fnr_flag_and_checksum() {
    let val: Vec<f64> = (1..=100).map(f64::from).collect();
    let mut t = 0.0;
    unsafe {
        assert_eq!(softcheck_calibrate_threshold(val.as_ptr(), 100, 0.99, &mut t), SoftcheckStatus::Ok);
    }
    assert_eq!(t, 99.0);
    assert_eq!(softcheck_flag(99.0, t), 0);
    assert_eq!(softcheck_flag(99.5, t), 1);

    let ood = [50.0, 99.0, 100.0, 200.0];
    let mut f = 0.0;
    unsafe { assert_eq!(softcheck_fnr99(ood.as_ptr(), 4, t, &mut f), SoftcheckStatus::Ok) };
    assert_eq!(f, 0.5);

    let y = [1.0, -3.0, 0.5];
    let mut c = 0.0;
    unsafe {
        assert_eq!(softcheck_checksum(SoftcheckChecksumKind::Linear, 0.0, y.as_ptr(), 3, &mut c), SoftcheckStatus::Ok);
        assert_eq!(c, -1.5);
        assert_eq!(softcheck_checksum(SoftcheckChecksumKind::Sinusoid, 2.0, y.as_ptr(), 3, &mut c), SoftcheckStatus::Ok);
        assert_eq!(c, 3.0f64.sin());
        assert_eq!(softcheck_checksum(SoftcheckChecksumKind::Sinusoid, -1.0, y.as_ptr(), 3, &mut c), SoftcheckStatus::Config);
        assert_eq!(softcheck_calibrate_threshold(val.as_ptr(), 0, 0.99, &mut t), SoftcheckStatus::Data);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(softcheck_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

use std::ffi::{CStr, CString};
use std::ptr;

use kernelgamma_ffi::*;

fn last_error() -> String {
    let p = kg_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn two_blobs() -> *mut KgDataset {
    let xs = [0.0, 0.0, 0.2, 0.1, 0.1, 0.3, 3.0, 3.0, 3.1, 2.8, 2.9, 3.2];
    let ys = [0usize, 0, 0, 1, 1, 1];
    let mut ds = ptr::null_mut();
    let st = unsafe { kg_dataset_from_dense(xs.as_ptr(), 6, 2, ys.as_ptr(), &mut ds) };
    assert_eq!(st, KgStatus::Ok);
    ds
}

#[test]
fn dataset_lifecycle() {
    let text = CString::new("+1 1:0.5 2:1\n-1 1:2 3:4\n").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { kg_dataset_parse_sparse(text.as_ptr(), &mut ds) }, KgStatus::Ok);
    assert!(kg_last_error().is_null());
    unsafe {
        assert_eq!(kg_dataset_len(ds), 2);
        assert_eq!(kg_dataset_feature_dim(ds), 3);
        assert_eq!(kg_dataset_n_classes(ds), 2);

        let mut json = ptr::null_mut();
        assert_eq!(kg_dataset_to_json(ds, &mut json), KgStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"version\""));
        kg_string_free(json);

        let mut scaled = ptr::null_mut();
        assert_eq!(kg_dataset_scale(ds, 0.0, 1.0, &mut scaled), KgStatus::Ok);
        assert_eq!(kg_dataset_len(scaled), 2);
        kg_dataset_free(scaled);
        kg_dataset_free(ds);
        assert_eq!(kg_dataset_len(ptr::null()), 0);
    }

    let csv = CString::new("label,a\nx,1.0\ny,2.0\n").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { kg_dataset_parse_csv(csv.as_ptr(), 0, &mut ds) }, KgStatus::Ok);
    unsafe {
        assert_eq!(kg_dataset_feature_dim(ds), 1);
        kg_dataset_free(ds);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let bad = CString::new("1 2:x\n").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { kg_dataset_parse_sparse(bad.as_ptr(), &mut ds) },
        KgStatus::Data
    );
    assert!(ds.is_null());
    assert!(last_error().contains("line 1"));

    assert_eq!(
        unsafe { kg_dataset_parse_sparse(ptr::null(), &mut ds) },
        KgStatus::NullPointer
    );
    assert!(last_error().contains("NULL"));

    let ds = two_blobs();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { kg_svm_train(ds, 1.0, -1.0, &mut model) },
        KgStatus::InvalidArgument
    );
    assert!(last_error().contains("C must be positive"));

    // Two coincident single-point classes: D_max = d = 0.
    let xs = [1.0, 1.0];
    let ys = [0usize, 1];
    let mut same = ptr::null_mut();
    unsafe {
        assert_eq!(
            kg_dataset_from_dense(xs.as_ptr(), 2, 1, ys.as_ptr(), &mut same),
            KgStatus::Ok
        );
        let mut est = KgEstimate::default();
        assert_eq!(kg_estimate_gamma(same, KgVariant::Avg, &mut est), KgStatus::Numerical);
        kg_dataset_free(same);
        kg_dataset_free(ds);
    }
}

#[test]
fn geometry_and_estimate() {
    let ds = two_blobs();
    let mut g = KgGeometry::default();
    let mut est = KgEstimate::default();
    unsafe {
        assert_eq!(kg_geometry(ds, &mut g), KgStatus::Ok);
        assert_eq!(kg_estimate_gamma(ds, KgVariant::Min, &mut est), KgStatus::Ok);
        kg_dataset_free(ds);
    }
    assert_eq!(g.n_classes, 2);
    assert!(g.d_min <= g.d_av);
    assert_eq!(est.d_used, g.d_min);
    assert!((est.gamma - 1.0 / (g.d_max * g.d_min)).abs() < 1e-12);
    assert!((est.sigma * est.sigma * 2.0 * est.gamma - 1.0).abs() < 1e-12);
}

#[test]
fn kos_and_svm_round_trip() {
    let ds = two_blobs();
    let queries = [0.1, 0.1, 3.0, 2.9, 0.0, 0.2];
    unsafe {
        let mut est = KgEstimate::default();
        assert_eq!(kg_estimate_gamma(ds, KgVariant::Avg, &mut est), KgStatus::Ok);

        let mut kos = ptr::null_mut();
        assert_eq!(kg_kos_fit(ds, est.gamma, f64::INFINITY, 0, &mut kos), KgStatus::Ok);
        let mut out = [9usize; 3];
        assert_eq!(
            kg_kos_predict_batch(kos, queries.as_ptr(), 3, 2, out.as_mut_ptr()),
            KgStatus::Ok
        );
        assert_eq!(out, [0, 1, 0]);
        let mut one = 9;
        assert_eq!(kg_kos_predict(kos, queries[2..].as_ptr(), 2, &mut one), KgStatus::Ok);
        assert_eq!(one, 1);
        assert_eq!(kg_kos_predict(kos, queries.as_ptr(), 3, &mut one), KgStatus::Data);
        let mut json = ptr::null_mut();
        assert_eq!(kg_kos_to_json(kos, &mut json), KgStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("subspaces"));
        kg_string_free(json);
        kg_kos_free(kos);

        let mut svm = ptr::null_mut();
        assert_eq!(kg_svm_train(ds, est.gamma, 10.0, &mut svm), KgStatus::Ok);
        let mut out = [9usize; 3];
        assert_eq!(
            kg_svm_predict_batch(svm, queries.as_ptr(), 3, 2, out.as_mut_ptr()),
            KgStatus::Ok
        );
        assert_eq!(out, [0, 1, 0]);
        let mut one = 9;
        assert_eq!(kg_svm_predict(svm, queries.as_ptr(), 2, &mut one), KgStatus::Ok);
        assert_eq!(one, 0);
        let mut json = ptr::null_mut();
        assert_eq!(kg_svm_to_json(svm, &mut json), KgStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("dual_coef"));
        kg_string_free(json);
        kg_svm_free(svm);

        assert_eq!(
            kg_svm_predict(ptr::null(), queries.as_ptr(), 2, &mut one),
            KgStatus::NullPointer
        );
        kg_dataset_free(ds);
        kg_kos_free(ptr::null_mut());
        kg_svm_free(ptr::null_mut());
        kg_string_free(ptr::null_mut());
    }
}

//! Drives the exported C functions the way a foreign caller would: through
//! raw pointers, status codes, and the thread-local error message.

use std::ffi::{CStr, CString};
use std::ptr;

use steerage_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(steerage_last_error()) }
        .to_str()
        .unwrap()
        .to_string()
}

const TINY_CONFIG: &str = "\
mode=learned
epochs=0
m=3
k=2
steps_per_sequence=2
batch_size=2
dropout=0.0
kernel_depth=1
conv_channels=2,3,4,5
feature_width=6
lstm_hidden=6
norm_groups=2
manager_channels=2,3,4
manager_feature=6
manager_hidden=6
";

#[test]
fn synth_train_save_load_evaluate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dir_c = c(dir.path().to_str().unwrap());

    let mut ds: *mut SteerageDataset = ptr::null_mut();
    let status = unsafe {
        steerage_dataset_synth(dir_c.as_ptr(), 160, 7, 8, 0.1, 3, 0.75, &mut ds)
    };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { steerage_dataset_len(ds) }, 160);
    assert_eq!(unsafe { steerage_dataset_train_len(ds) }, 120);

    let config = c(TINY_CONFIG);
    let mut model: *mut SteerageModel = ptr::null_mut();
    let status =
        unsafe { steerage_model_train(ds, config.as_ptr(), ptr::null(), &mut model) };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());

    let mode = unsafe { CStr::from_ptr(steerage_model_mode(model)) };
    assert_eq!(mode.to_str().unwrap(), "learned");

    let (mut rmse, mut mae) = (f64::NAN, f64::NAN);
    let status = unsafe { steerage_model_evaluate(model, ds, &mut rmse, &mut mae) };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());
    assert!(rmse.is_finite() && mae.is_finite());
    assert!(mae <= rmse);

    let mut angles = [f64::NAN; 10];
    let status = unsafe { steerage_model_predict(model, ds, 10, 20, angles.as_mut_ptr()) };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());
    assert!(angles.iter().all(|a| a.is_finite()));

    let ckpt = c(dir.path().join("model.ckpt").to_str().unwrap());
    assert_eq!(
        unsafe { steerage_model_save(model, ckpt.as_ptr()) },
        SteerageStatus::Ok
    );
    let mut reloaded: *mut SteerageModel = ptr::null_mut();
    assert_eq!(
        unsafe { steerage_model_load(ckpt.as_ptr(), &mut reloaded) },
        SteerageStatus::Ok
    );
    let (mut rmse2, mut mae2) = (f64::NAN, f64::NAN);
    let status = unsafe { steerage_model_evaluate(reloaded, ds, &mut rmse2, &mut mae2) };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());
    assert_eq!(rmse.to_bits(), rmse2.to_bits());
    assert_eq!(mae.to_bits(), mae2.to_bits());

    unsafe {
        steerage_model_free(model);
        steerage_model_free(reloaded);
        steerage_dataset_free(ds);
    }
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    let mut ds: *mut SteerageDataset = ptr::null_mut();
    let status = unsafe { steerage_dataset_load(ptr::null(), 0.75, &mut ds) };
    assert_eq!(status, SteerageStatus::NullArgument);
    assert!(last_error().contains("log_path"), "{}", last_error());

    let not_utf8 = CString::new([0xffu8, 0xfe]).unwrap();
    let status = unsafe { steerage_dataset_load(not_utf8.as_ptr(), 0.75, &mut ds) };
    assert_eq!(status, SteerageStatus::InvalidUtf8);

    let missing = c("/nonexistent/model.ckpt");
    let mut model: *mut SteerageModel = ptr::null_mut();
    let status = unsafe { steerage_model_load(missing.as_ptr(), &mut model) };
    assert_eq!(status, SteerageStatus::Io);
    assert!(last_error().contains("/nonexistent/model.ckpt"), "{}", last_error());

    assert_eq!(unsafe { steerage_dataset_len(ptr::null()) }, 0);
    assert!(unsafe { steerage_model_mode(ptr::null()) }.is_null());
    unsafe {
        steerage_dataset_free(ptr::null_mut());
        steerage_model_free(ptr::null_mut());
    }
}

#[test]
fn config_errors_carry_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let dir_c = c(dir.path().to_str().unwrap());
    let mut ds: *mut SteerageDataset = ptr::null_mut();
    let status = unsafe {
        steerage_dataset_synth(dir_c.as_ptr(), 40, 7, 8, 0.0, 3, 0.75, &mut ds)
    };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());

    let bad = c("mode=none\nlerning_rate=0.1\n");
    let mut model: *mut SteerageModel = ptr::null_mut();
    let status = unsafe { steerage_model_train(ds, bad.as_ptr(), ptr::null(), &mut model) };
    assert_eq!(status, SteerageStatus::Config);
    assert!(last_error().contains("lerning_rate"), "{}", last_error());

    let centroid = c("mode=gt-tsne\nepochs=0\n");
    let status = unsafe { steerage_model_train(ds, centroid.as_ptr(), ptr::null(), &mut model) };
    assert_eq!(status, SteerageStatus::Config);
    assert!(last_error().contains("embedding_path"), "{}", last_error());

    unsafe { steerage_dataset_free(ds) };
}

#[test]
fn empty_prediction_ranges_are_contract_errors() {
    let dir = tempfile::tempdir().unwrap();
    let dir_c = c(dir.path().to_str().unwrap());
    let mut ds: *mut SteerageDataset = ptr::null_mut();
    let status = unsafe {
        steerage_dataset_synth(dir_c.as_ptr(), 160, 7, 8, 0.1, 3, 0.75, &mut ds)
    };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());
    let config = c(TINY_CONFIG);
    let mut model: *mut SteerageModel = ptr::null_mut();
    let status = unsafe { steerage_model_train(ds, config.as_ptr(), ptr::null(), &mut model) };
    assert_eq!(status, SteerageStatus::Ok, "{}", last_error());

    let mut angle = 0.0f64;
    let status = unsafe { steerage_model_predict(model, ds, 20, 20, &mut angle) };
    assert_eq!(status, SteerageStatus::Contract);

    let status = unsafe { steerage_model_predict(model, ds, 0, 4, &mut angle) };
    assert_eq!(status, SteerageStatus::Contract);
    assert!(last_error().contains("insufficient history"), "{}", last_error());

    unsafe {
        steerage_model_free(model);
        steerage_dataset_free(ds);
    }
}

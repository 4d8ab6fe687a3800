use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use echo_sonar::chirp::ChirpSpec;
use echo_sonar::regressor::{write_checkpoint, Checkpoint, Model, ModelConfig};
use echo_sonar::sim::{gesture_trajectory, simulate_session, GestureKind, HandModel, RenderOptions, Scene};
use echo_sonar_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { es_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn interleaved(channels: &[Vec<f64>]) -> Vec<f32> {
    let frames = channels[0].len();
    (0..frames)
        .flat_map(|t| channels.iter().map(move |c| c[t] as f32))
        .collect()
}

fn recording() -> Vec<Vec<f64>> {
    let traj = gesture_trajectory(GestureKind::Fingers(1), 1.5, 3).unwrap();
    simulate_session(
        &ChirpSpec::default(),
        &Scene::default(),
        &traj,
        &HandModel::default(),
        &RenderOptions::default(),
    )
    .unwrap()
    .recording
    .channels
}

#[test]
fn chirp_and_null_handling() {
    let spec = es_chirp_spec_default();
    let mut buf = vec![0.0; 512];
    assert_eq!(unsafe { es_chirp_generate(&spec, buf.as_mut_ptr(), 512) }, ES_OK);
    assert!(buf.iter().any(|&v| v != 0.0));
    assert_eq!(unsafe { es_chirp_generate(&spec, buf.as_mut_ptr(), 100) }, ES_ERR_SHAPE);
    assert!(last_error().contains("100"));
    assert_eq!(
        unsafe { es_chirp_generate(ptr::null(), buf.as_mut_ptr(), 512) },
        ES_ERR_NULL
    );
    let bad = EsChirpSpec {
        sample_rate_hz: 0,
        ..spec
    };
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { es_pipeline_new(&bad, &mut p) }, ES_ERR_CONFIG);
    assert!(p.is_null());
    unsafe {
        es_pipeline_free(ptr::null_mut());
        es_profiles_free(ptr::null_mut());
        es_model_free(ptr::null_mut());
    }
}

#[test]
fn preprocess_through_handles() {
    let spec = es_chirp_spec_default();
    let mut pipe = ptr::null_mut();
    assert_eq!(unsafe { es_pipeline_new(&spec, &mut pipe) }, ES_OK);
    let chans = recording();
    let data = interleaved(&chans);
    let mut prof = ptr::null_mut();
    let rc = unsafe { es_preprocess(pipe, data.as_ptr(), 7, chans[0].len(), &mut prof) };
    assert_eq!(rc, ES_OK);
    let (mut n, mut c, mut k) = (0, 0, 0);
    assert_eq!(unsafe { es_profiles_shape(prof, &mut n, &mut c, &mut k) }, ES_OK);
    assert_eq!((c, k), (7, 256));
    assert!(n > 100);
    let mut one = vec![0.0f32; c * k];
    assert_eq!(unsafe { es_profiles_copy(prof, 0, one.as_mut_ptr(), one.len()) }, ES_OK);
    assert!(one.iter().all(|v| *v >= 0.0));
    assert_eq!(
        unsafe { es_profiles_copy(prof, n, one.as_mut_ptr(), one.len()) },
        ES_ERR_INPUT
    );
    let mut anchor = 0;
    assert_eq!(unsafe { es_profiles_anchor(prof, 0, &mut anchor) }, ES_OK);
    let mut win = vec![0.0f32; c * k * 50];
    assert_eq!(
        unsafe { es_profiles_window(prof, 0, win.as_mut_ptr(), win.len()) },
        ES_OK
    );

    // A model of the right input shape predicts from that window.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bvck");
    let cfg = ModelConfig {
        conv_channels: [4, 4],
        hidden: 8,
        ..ModelConfig::default()
    };
    let ck = Checkpoint::new(Model::new(&cfg).unwrap(), "init", Vec::new());
    write_checkpoint(&mut std::fs::File::create(&path).unwrap(), &ck).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { es_model_load(cpath.as_ptr(), &mut model) }, ES_OK);
    let mut len = 0;
    assert_eq!(unsafe { es_model_input_len(model, &mut len) }, ES_OK);
    assert_eq!(len, win.len());
    let mut pose = [0.0; 63];
    assert_eq!(
        unsafe { es_model_predict(model, win.as_ptr(), win.len(), pose.as_mut_ptr()) },
        ES_OK
    );
    assert!(pose.iter().all(|v| v.is_finite()));
    assert_eq!(
        unsafe { es_model_predict(model, win.as_ptr(), 10, pose.as_mut_ptr()) },
        ES_ERR_SHAPE
    );

    // Pose analytics on the prediction's ground-truth counterpart.
    let gt = echo_sonar::pose::canonical_activation_pose().to_flat();
    let mut angles = [0.0; 19];
    assert_eq!(unsafe { es_flexion_angles(gt.as_ptr(), angles.as_mut_ptr()) }, ES_OK);
    let mut sim = 1.0;
    assert_eq!(
        unsafe { es_activation_similarity(gt.as_ptr(), gt.as_ptr(), &mut sim) },
        ES_OK
    );
    assert_eq!(sim, 0.0);

    unsafe {
        es_model_free(model);
        es_profiles_free(prof);
        es_pipeline_free(pipe);
    }
}

#[test]
fn dead_channel_reports_anchor_error() {
    let spec = es_chirp_spec_default();
    let mut pipe = ptr::null_mut();
    assert_eq!(unsafe { es_pipeline_new(&spec, &mut pipe) }, ES_OK);
    let mut chans = recording();
    chans[4].iter_mut().for_each(|v| *v = 0.0);
    let data = interleaved(&chans);
    let mut prof = ptr::null_mut();
    let rc = unsafe { es_preprocess(pipe, data.as_ptr(), 7, chans[0].len(), &mut prof) };
    assert_eq!(rc, ES_ERR_ANCHOR);
    assert!(prof.is_null());
    assert!(last_error().contains("channel 4"), "{}", last_error());
    let missing = CString::new("/nonexistent/model.bvck").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { es_model_load(missing.as_ptr(), &mut model) }, ES_ERR_IO);
    unsafe { es_pipeline_free(pipe) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/echo_sonar.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compile and run a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libecho_sonar_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("main.c");
    std::fs::write(
        &c,
        r#"#include <stdio.h>
#include "echo_sonar.h"
int main(void) {
    EsChirpSpec spec = es_chirp_spec_default();
    double chirp[512];
    if (es_chirp_generate(&spec, chirp, 512) != ES_OK) return 1;
    EsPipeline *p = NULL;
    spec.sample_rate_hz = 0;
    if (es_pipeline_new(&spec, &p) != ES_ERR_CONFIG || p != NULL) return 2;
    char msg[128];
    if (es_last_error_message(msg, sizeof msg) == 0) return 3;
    printf("%s|%s\n", es_version(), msg);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&c)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")), "{text}");
    assert!(text.contains("sample"), "{text}");
}

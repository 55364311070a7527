use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use msvbx::pipeline::{cluster_recording, PipelineConfig};
use msvbx::recording::write_recording;
use msvbx::stitch::format_rttm;
use msvbx::synth::{generate, sample_labeled_set, SynthConfig};
use msvbx::PldaBackend;
use msvbx_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(msvbx_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

struct Fixture {
    _dir: tempfile::TempDir,
    rec_path: std::path::PathBuf,
    model_path: std::path::PathBuf,
    expected_rttm: String,
    expected_speakers: usize,
    out_dir: std::path::PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        recording_id: "ffi".into(),
        num_chunks: 60,
        seed: 4,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let rec_path = dir.path().join("ffi.msvb");
    write_recording(&out.recording, &rec_path).unwrap();
    let backend = PldaBackend::train(&sample_labeled_set(&cfg.phi, 50, 20, 1).unwrap(), 32).unwrap();
    let model_path = dir.path().join("model.json");
    backend.save(&model_path).unwrap();
    let outcome = cluster_recording(&out.recording, &backend, &PipelineConfig::default()).unwrap();
    Fixture {
        rec_path,
        model_path,
        expected_rttm: format_rttm(&outcome.result.segments()),
        expected_speakers: outcome.result.num_speakers(),
        out_dir: dir.path().to_path_buf(),
        _dir: dir,
    }
}

#[test]
fn cluster_through_handles_matches_library() {
    let fx = fixture();
    unsafe {
        let mut rec = ptr::null_mut();
        assert_eq!(msvbx_recording_read(cpath(&fx.rec_path).as_ptr(), &mut rec), MsvbxStatus::Ok);
        assert_eq!(msvbx_recording_num_chunks(rec), 60);
        let mut backend = ptr::null_mut();
        assert_eq!(msvbx_backend_load(cpath(&fx.model_path).as_ptr(), &mut backend), MsvbxStatus::Ok);
        assert_eq!(msvbx_backend_dim(backend), 32);

        let cfg = msvbx_config_default();
        assert_eq!((cfg.fa, cfg.fb, cfg.p_loop), (0.4, 17.0, 0.8));
        let mut res = ptr::null_mut();
        assert_eq!(msvbx_cluster(rec, backend, &cfg, &mut res), MsvbxStatus::Ok, "{}", last_error());
        assert_eq!(msvbx_result_num_speakers(res), fx.expected_speakers);
        assert!(msvbx_result_num_iterations(res) > 0);
        let mut elbo = 0.0;
        assert_eq!(msvbx_result_elbo(res, 0, &mut elbo), MsvbxStatus::Ok);
        assert!(elbo.is_finite());

        let n = msvbx_result_num_segments(res);
        assert_eq!(n, fx.expected_rttm.lines().count());
        let mut seg = MsvbxSegment {
            speaker: 0,
            onset: 0.0,
            duration: 0.0,
        };
        for i in 0..n {
            assert_eq!(msvbx_result_segment(res, i, &mut seg), MsvbxStatus::Ok);
            let line = fx.expected_rttm.lines().nth(i).unwrap();
            assert!(line.contains(&format!(" spk{} ", seg.speaker)), "{line}");
        }
        assert_eq!(msvbx_result_segment(res, n, &mut seg), MsvbxStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let rttm = fx.out_dir.join("out.rttm");
        assert_eq!(msvbx_result_write_rttm(res, cpath(&rttm).as_ptr()), MsvbxStatus::Ok);
        assert_eq!(std::fs::read_to_string(&rttm).unwrap(), fx.expected_rttm);

        msvbx_result_free(res);
        msvbx_backend_free(backend);
        msvbx_recording_free(rec);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("bad.msvb");
    std::fs::write(&garbage, b"not a recording").unwrap();
    unsafe {
        let mut rec = ptr::null_mut();
        assert_eq!(msvbx_recording_read(cpath(&garbage).as_ptr(), &mut rec), MsvbxStatus::Format);
        assert!(rec.is_null());
        assert!(!last_error().is_empty());
        let missing = dir.path().join("missing.msvb");
        assert_eq!(msvbx_recording_read(cpath(&missing).as_ptr(), &mut rec), MsvbxStatus::Io);
        assert_eq!(msvbx_recording_read(ptr::null(), &mut rec), MsvbxStatus::NullPointer);
        let name = CStr::from_ptr(msvbx_status_name(MsvbxStatus::Format));
        assert_eq!(name.to_str().unwrap(), "format error");
        // Freeing null handles is a no-op.
        msvbx_recording_free(ptr::null_mut());
        msvbx_backend_free(ptr::null_mut());
        msvbx_result_free(ptr::null_mut());
    }
}

#[test]
fn recording_from_arrays_validates_shape() {
    let id = CString::new("arr").unwrap();
    let act = [1.0f32, 1.0, 0.0, 0.0];
    let emb = [0.5f32, -0.5, 0.0, 0.0];
    unsafe {
        let mut rec = ptr::null_mut();
        let s = msvbx_recording_from_arrays(id.as_ptr(), 1, 2, 2, 2, 0.1, act.as_ptr(), emb.as_ptr(), &mut rec);
        assert_eq!(s, MsvbxStatus::Ok);
        assert_eq!(msvbx_recording_num_chunks(rec), 1);
        msvbx_recording_free(rec);
        let s = msvbx_recording_from_arrays(id.as_ptr(), 1, 2, 2, 2, -1.0, act.as_ptr(), emb.as_ptr(), &mut rec);
        assert_eq!(s, MsvbxStatus::InvalidArgument);
    }
}

#[test]
fn invalid_config_is_rejected() {
    let fx = fixture();
    unsafe {
        let mut rec = ptr::null_mut();
        msvbx_recording_read(cpath(&fx.rec_path).as_ptr(), &mut rec);
        let mut backend = ptr::null_mut();
        msvbx_backend_load(cpath(&fx.model_path).as_ptr(), &mut backend);
        let cfg = MsvbxConfig {
            p_loop: 1.5,
            ..msvbx_config_default()
        };
        let mut res = ptr::null_mut();
        assert_eq!(msvbx_cluster(rec, backend, &cfg, &mut res), MsvbxStatus::InvalidArgument);
        assert!(last_error().contains("p_loop"));
        assert!(res.is_null());
        msvbx_backend_free(backend);
        msvbx_recording_free(rec);
    }
}

/// The generated header must be valid C, checked with the system compiler
/// when one is installed.
#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/msvbx.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["msvbx_cluster", "msvbx_config_default", "MSVBX_STATUS_OK", "typedef struct MsvbxResult"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"msvbx.h\"\nint main(void) { MsvbxConfig c = msvbx_config_default(); return c.mode; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}

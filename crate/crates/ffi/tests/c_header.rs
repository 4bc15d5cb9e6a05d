//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "vpsbasin.h"

int main(void) {
    VbNetwork *net = NULL;
    if (vb_network_two_population(5, 0.6, 0.4, 1, &net) != VB_STATUS_OK) return 1;
    if (vb_network_n_nodes(net) != 10) return 2;

    const char *dyn = "{\"kind\":\"kuramoto\",\"kuramoto\":{\"sigma\":1.0,\"gamma\":0.025}}";
    VbModel *model = NULL;
    if (vb_model_new(net, dyn, &model) != VB_STATUS_OK) return 3;

    VbIntegration cfg;
    if (vb_integration_default("kuramoto", &cfg) != VB_STATUS_OK) return 4;
    cfg.transient_time = 5.0;
    cfg.window_time = 5.0;
    double init[10];
    for (int i = 0; i < 10; i++) init[i] = 0.3 * i;
    VbTrajectory *traj = NULL;
    if (vb_simulate(model, init, 10, &cfg, &traj) != VB_STATUS_OK) return 5;

    VbVpsConfig vcfg = {1.0, 10, VB_CORR_MODE_LINEAR_VALID, VB_NORMALIZATION_RAW};
    double fp[90];
    if (vb_build_vps(traj, &vcfg, VB_OBSERVABLE_SIN_PHASE, fp, 90) != VB_STATUS_OK) return 6;
    for (int k = 45; k < 90; k++) if (fp[k] < 0.0) return 7;

    if (vb_network_load("/no/such/file", VB_NETWORK_FORMAT_EDGE_LIST, false, &net) != VB_STATUS_IO) return 8;
    if (vb_last_error() == NULL || strstr(vb_last_error(), "/no/such/file") == NULL) return 9;

    vb_trajectory_free(traj);
    vb_model_free(model);
    vb_network_free(net);
    printf("ok %s\n", vb_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<this test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libvpsbasin_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let build = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));

    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}, stdout {stdout}", run.status.code());
    assert_eq!(stdout.trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}

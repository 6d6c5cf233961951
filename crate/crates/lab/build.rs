use std::process::Command;

// Stamp the git commit into the binary so every report can say exactly which
// code produced it. Absent or broken git is fine — the reports then say so.
fn main() {
    let hash = Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "untracked".to_string());
    println!("cargo:rustc-env=VPLAB_GIT_HASH={hash}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}

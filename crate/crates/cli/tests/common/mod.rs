//! Helpers shared by the CLI test binaries.
#![allow(dead_code)]

use std::process::{Command, Output};

/// Command for the compiled `fedval` binary, with ambient `FEDVAL_*`
/// variables stripped so each test fully controls the environment.
pub fn fedval() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedval"));
    for (key, _) in std::env::vars() {
        if key.starts_with("FEDVAL_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

/// Runs the command, asserting a zero exit status.
pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary spawns");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// All permutations of 1..=n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in 1..=n {
            if !used[v - 1] {
                used[v - 1] = true;
                cur.push(v);
                go(n, cur, used, out);
                cur.pop();
                used[v - 1] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

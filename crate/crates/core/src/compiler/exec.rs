use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

/// Output beyond this many bytes is dropped.
const OUTPUT_CAP: u64 = 1 << 20;

#[derive(Debug)]
pub(crate) enum Outcome {
    NotFound,
    TimedOut { output: String },
    Exited { code: Option<i32>, output: String },
}

pub(crate) struct Invocation<'a> {
    pub argv: &'a [String],
    pub dir: &'a Path,
    pub timeout: Duration,
    pub deny_network: bool,
}

/// Runs `argv` in its own process group with a scrubbed environment. Stdout and
/// stderr are interleaved into one capture. On timeout the whole group is killed.
pub(crate) fn run(inv: &Invocation<'_>) -> io::Result<(Outcome, Duration)> {
    let (program, args) = inv
        .argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut capture = tempfile::tempfile()?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(inv.dir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("HOME", inv.dir)
        .env("TMPDIR", inv.dir)
        .env("LC_ALL", "C")
        .env("LANG", "C")
        .stdin(Stdio::null())
        .stdout(capture.try_clone()?)
        .stderr(capture.try_clone()?)
        .process_group(0);
    if inv.deny_network {
        // SAFETY: only the async-signal-safe `unshare` syscall runs between fork and exec.
        unsafe {
            cmd.pre_exec(|| {
                if libc::unshare(libc::CLONE_NEWNET) != 0 {
                    // Unprivileged fallback; failure leaves networking as is.
                    libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
                }
                Ok(())
            });
        }
    }

    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(child) => child,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Ok((Outcome::NotFound, started.elapsed()))
        }
        Err(e) => return Err(e),
    };
    let status = child.wait_timeout(inv.timeout)?;
    let outcome = match status {
        Some(status) => {
            // Reap stragglers the tool may have left in its group.
            kill_group(child.id());
            Outcome::Exited {
                code: status.code(),
                output: read_capture(&mut capture)?,
            }
        }
        None => {
            kill_group(child.id());
            let _ = child.kill();
            child.wait()?;
            Outcome::TimedOut {
                output: read_capture(&mut capture)?,
            }
        }
    };
    Ok((outcome, started.elapsed()))
}

fn kill_group(pid: u32) {
    if let Ok(pid) = i32::try_from(pid) {
        // SAFETY: plain syscall; a stale group id only yields ESRCH.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
}

fn read_capture(file: &mut File) -> io::Result<String> {
    file.seek(SeekFrom::Start(0))?;
    let mut buf = Vec::new();
    file.take(OUTPUT_CAP).read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Whether `program` names an executable file, directly or through `PATH`.
pub(crate) fn resolvable(program: &str) -> bool {
    use std::os::unix::fs::PermissionsExt;
    let executable = |p: &Path| {
        p.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    };
    if program.contains('/') {
        return executable(Path::new(program));
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| executable(&dir.join(program))))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str, timeout: Duration) -> Outcome {
        let dir = tempfile::tempdir().unwrap();
        let argv = vec!["sh".to_string(), "-c".to_string(), script.to_string()];
        run(&Invocation {
            argv: &argv,
            dir: dir.path(),
            timeout,
            deny_network: false,
        })
        .unwrap()
        .0
    }

    #[test]
    fn captures_both_streams() {
        match sh("echo out; echo err 1>&2; exit 3", Duration::from_secs(10)) {
            Outcome::Exited { code, output } => {
                assert_eq!(code, Some(3));
                assert!(output.contains("out") && output.contains("err"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kills_process_group_on_timeout() {
        let started = Instant::now();
        let outcome = sh("sleep 30 & sleep 30; wait", Duration::from_millis(300));
        assert!(matches!(outcome, Outcome::TimedOut { .. }));
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn missing_program() {
        let dir = tempfile::tempdir().unwrap();
        let argv = vec!["definitely-not-a-tool-xyz".to_string()];
        let (outcome, _) = run(&Invocation {
            argv: &argv,
            dir: dir.path(),
            timeout: Duration::from_secs(1),
            deny_network: false,
        })
        .unwrap();
        assert!(matches!(outcome, Outcome::NotFound));
        assert!(!resolvable("definitely-not-a-tool-xyz"));
        assert!(resolvable("sh"));
    }
}

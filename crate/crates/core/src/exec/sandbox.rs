//! One-shot subprocess execution with a wall-clock timeout, an address-space
//! cap and a stdout size cap.
//!
//! The child runs in its own process group with a cleared environment, so a
//! timeout kills the whole group and the candidate never sees the harness's
//! secrets.

use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::ExecLimits;

const STDERR_KEEP: usize = 64 * 1024;
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug)]
pub(crate) enum Termination {
    Exited(ExitStatus),
    TimedOut,
    OutputLimit,
}

#[derive(Debug)]
pub(crate) struct ProcessOutput {
    pub termination: Termination,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

fn sanitized_env() -> Vec<(&'static str, String)> {
    let path = std::env::var("PATH").unwrap_or_else(|_| "/usr/local/bin:/usr/bin:/bin".into());
    vec![
        ("PATH", path),
        ("LANG", "C.UTF-8".into()),
        ("LC_ALL", "C.UTF-8".into()),
        ("PYTHONHASHSEED", "0".into()),
        ("PYTHONDONTWRITEBYTECODE", "1".into()),
        ("PYTHONIOENCODING", "utf-8".into()),
    ]
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // SAFETY: plain syscall on a stack value.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling our own child's process group.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

fn spawn_reader<R: Read + Send + 'static>(
    mut source: R,
    keep: usize,
    overflow: Option<Arc<AtomicBool>>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match source.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = keep.saturating_sub(kept.len());
                    kept.extend_from_slice(&chunk[..n.min(room)]);
                    if n > room {
                        if let Some(flag) = &overflow {
                            flag.store(true, Ordering::SeqCst);
                        }
                    }
                }
            }
        }
        kept
    })
}

pub(crate) fn run_process(
    argv: &[String],
    cwd: &Path,
    stdin: &str,
    limits: &ExecLimits,
) -> io::Result<ProcessOutput> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty run command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .env_clear()
        .envs(sanitized_env())
        .env("HOME", cwd)
        .env("TMPDIR", cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let mem = limits.memory_cap_bytes;
    // SAFETY: only async-signal-safe calls (setrlimit) run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            set_limit(libc::RLIMIT_AS, mem)?;
            set_limit(libc::RLIMIT_CORE, 0)?;
            Ok(())
        });
    }

    let mut child = cmd.spawn()?;
    let started = Instant::now();

    let mut child_stdin = child.stdin.take().expect("piped stdin");
    let input = stdin.as_bytes().to_vec();
    let writer = thread::spawn(move || {
        // A candidate that never reads stdin closes the pipe early.
        let _ = child_stdin.write_all(&input);
    });

    let overflow = Arc::new(AtomicBool::new(false));
    let out_reader = spawn_reader(
        child.stdout.take().expect("piped stdout"),
        limits.max_output_bytes as usize,
        Some(overflow.clone()),
    );
    let err_reader = spawn_reader(
        child.stderr.take().expect("piped stderr"),
        STDERR_KEEP,
        None,
    );

    let timeout = Duration::from_millis(limits.per_test_timeout_ms);
    let termination = loop {
        if let Some(status) = child.try_wait()? {
            break Termination::Exited(status);
        }
        if overflow.load(Ordering::SeqCst) {
            kill_group(&mut child);
            let _ = child.wait();
            break Termination::OutputLimit;
        }
        if started.elapsed() >= timeout {
            kill_group(&mut child);
            let _ = child.wait();
            break Termination::TimedOut;
        }
        thread::sleep(POLL);
    };
    // Orphaned grandchildren may still hold the pipes open.
    // SAFETY: signalling the (possibly already empty) group we created.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    let termination = match termination {
        Termination::Exited(_) if overflow.load(Ordering::SeqCst) => Termination::OutputLimit,
        t => t,
    };
    Ok(ProcessOutput {
        termination,
        stdout,
        stderr,
    })
}

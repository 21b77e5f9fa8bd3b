use std::any::Any;
use std::collections::VecDeque;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use super::ExecError;

type Job = Box<dyn FnOnce() + Send + 'static>;

struct State {
    jobs: VecDeque<Job>,
    workers: usize,
    shutdown: bool,
}

struct Shared {
    state: Mutex<State>,
    wake: Condvar,
}

/// A pool of persistent worker threads fed from one shared job queue.
///
/// Workers are spawned lazily, up to the largest helper count any dispatch
/// has asked for. The pool is `Sync`; concurrent dispatches interleave on the
/// queue, and each dispatching thread also drains its own chunks, so nested
/// or concurrent dispatches always make progress.
pub struct ThreadPool {
    shared: Arc<Shared>,
    handles: Mutex<Vec<JoinHandle<()>>>,
}

const MAX_WORKERS: usize = 512;

impl Default for ThreadPool {
    fn default() -> Self {
        Self::new()
    }
}

impl ThreadPool {
    pub fn new() -> Self {
        ThreadPool {
            shared: Arc::new(Shared {
                state: Mutex::new(State {
                    jobs: VecDeque::new(),
                    workers: 0,
                    shutdown: false,
                }),
                wake: Condvar::new(),
            }),
            handles: Mutex::new(Vec::new()),
        }
    }

    /// Number of worker threads spawned so far.
    pub fn workers(&self) -> usize {
        self.shared.state.lock().unwrap().workers
    }

    fn submit(&self, jobs: Vec<Job>) {
        let wanted = jobs.len().min(MAX_WORKERS);
        let mut st = self.shared.state.lock().unwrap();
        let missing = wanted.saturating_sub(st.workers);
        st.workers += missing;
        st.jobs.extend(jobs);
        drop(st);
        if missing > 0 {
            let mut handles = self.handles.lock().unwrap();
            for _ in 0..missing {
                let shared = Arc::clone(&self.shared);
                handles.push(
                    std::thread::Builder::new()
                        .name("smartexec-worker".into())
                        .spawn(move || worker_loop(&shared))
                        .expect("failed to spawn worker thread"),
                );
            }
        }
        self.shared.wake.notify_all();
    }

    /// Runs `task` once for every interval of `plan` on up to `threads`
    /// threads (the caller plus `threads - 1` pool workers). Intervals are
    /// handed out first-come from a shared cursor. A panicking interval marks
    /// the dispatch failed; intervals not yet started are skipped, and the
    /// first panic message is returned after every started interval finished.
    pub fn execute(
        &self,
        plan: &[Range<usize>],
        threads: usize,
        task: &(dyn Fn(Range<usize>) + Sync),
    ) -> Result<(), ExecError> {
        let helpers = threads.max(1).min(plan.len()).saturating_sub(1);
        if helpers == 0 {
            for r in plan {
                catch_unwind(AssertUnwindSafe(|| task(r.clone()))).map_err(panic_error)?;
            }
            return Ok(());
        }

        // SAFETY: the erased reference is only dereferenced by helpers that
        // registered in `gate` before it was closed, and this function does
        // not return until all of those have deregistered.
        let task: &'static (dyn Fn(Range<usize>) + Sync) = unsafe { std::mem::transmute(task) };
        let dispatch = Arc::new(Dispatch {
            plan: plan.to_vec(),
            next: AtomicUsize::new(0),
            failed: AtomicBool::new(false),
            panic: Mutex::new(None),
            task,
            gate: Mutex::new(Gate {
                closed: false,
                active: 0,
            }),
            done: Condvar::new(),
        });
        let jobs = (0..helpers)
            .map(|_| {
                let d = Arc::clone(&dispatch);
                Box::new(move || d.help()) as Job
            })
            .collect();
        self.submit(jobs);

        dispatch.drain();
        let mut gate = dispatch.gate.lock().unwrap();
        gate.closed = true;
        while gate.active > 0 {
            gate = dispatch.done.wait(gate).unwrap();
        }
        drop(gate);

        let panic = dispatch.panic.lock().unwrap().take();
        match panic {
            Some(msg) => Err(ExecError::Panicked(msg)),
            None => Ok(()),
        }
    }
}

impl Drop for ThreadPool {
    fn drop(&mut self) {
        self.shared.state.lock().unwrap().shutdown = true;
        self.shared.wake.notify_all();
        for h in self.handles.get_mut().unwrap().drain(..) {
            let _ = h.join();
        }
    }
}

fn worker_loop(shared: &Shared) {
    loop {
        let job = {
            let mut st = shared.state.lock().unwrap();
            loop {
                if let Some(job) = st.jobs.pop_front() {
                    break job;
                }
                if st.shutdown {
                    return;
                }
                st = shared.wake.wait(st).unwrap();
            }
        };
        job();
    }
}

struct Gate {
    closed: bool,
    active: usize,
}

struct Dispatch {
    plan: Vec<Range<usize>>,
    next: AtomicUsize,
    failed: AtomicBool,
    panic: Mutex<Option<String>>,
    task: &'static (dyn Fn(Range<usize>) + Sync),
    gate: Mutex<Gate>,
    done: Condvar,
}

impl Dispatch {
    fn drain(&self) {
        loop {
            let i = self.next.fetch_add(1, Ordering::Relaxed);
            if i >= self.plan.len() {
                return;
            }
            if self.failed.load(Ordering::Relaxed) {
                continue;
            }
            let r = self.plan[i].clone();
            if let Err(payload) = catch_unwind(AssertUnwindSafe(|| (self.task)(r))) {
                self.failed.store(true, Ordering::Relaxed);
                let mut slot = self.panic.lock().unwrap();
                if slot.is_none() {
                    *slot = Some(panic_message(payload.as_ref()));
                }
            }
        }
    }

    fn help(&self) {
        {
            let mut gate = self.gate.lock().unwrap();
            if gate.closed {
                return;
            }
            gate.active += 1;
        }
        self.drain();
        let mut gate = self.gate.lock().unwrap();
        gate.active -= 1;
        if gate.active == 0 {
            self.done.notify_all();
        }
    }
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "loop body panicked".to_string()
    }
}

fn panic_error(payload: Box<dyn Any + Send>) -> ExecError {
    ExecError::Panicked(panic_message(payload.as_ref()))
}

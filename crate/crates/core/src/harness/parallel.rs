//! Ordered, panic-isolating parallel map over sample indices.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Error;

/// Why a single task produced no value.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskFailure {
    Error(Error),
    Panic(String),
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

fn run_one<T, F>(task: &F, index: u64) -> Result<T, TaskFailure>
where
    F: Fn(u64) -> crate::Result<T>,
{
    match catch_unwind(AssertUnwindSafe(|| task(index))) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(TaskFailure::Error(e)),
        Err(p) => Err(TaskFailure::Panic(panic_message(p))),
    }
}

/// Applies `task` to every index on `workers` threads. Results come back in the
/// order of `indices` whatever the completion order.
pub fn parallel_map<T, F>(indices: &[u64], workers: usize, task: F) -> Vec<Result<T, TaskFailure>>
where
    T: Send,
    F: Fn(u64) -> crate::Result<T> + Sync,
{
    let workers = workers.max(1).min(indices.len().max(1));
    if workers == 1 {
        return indices.iter().map(|&i| run_one(&task, i)).collect();
    }
    let slots: Vec<Mutex<Option<Result<T, TaskFailure>>>> =
        indices.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= indices.len() {
                    break;
                }
                let r = run_one(&task, indices[k]);
                *slots[k].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every slot is filled")
        })
        .collect()
}

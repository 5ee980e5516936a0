//! Bounded-concurrency job execution with an in-order result sink.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

/// Applies `job` to every item using at most `limit` worker threads.
///
/// `sink` runs on the calling thread only and sees results strictly in item
/// order, as soon as each contiguous prefix is complete. This makes the sink a
/// natural single writer for append-only ledgers.
pub fn run_ordered<T, R, F, S>(items: &[T], limit: usize, job: F, mut sink: S)
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
    S: FnMut(usize, R),
{
    if items.is_empty() {
        return;
    }
    let workers = limit.max(1).min(items.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let job = &job;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                if tx.send((i, job(&items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut expected = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&expected) {
                sink(expected, r);
                expected += 1;
            }
        }
    });
}

/// Convenience wrapper collecting results in item order.
pub fn map_bounded<T, R, F>(items: &[T], limit: usize, job: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let mut out = Vec::with_capacity(items.len());
    run_ordered(items, limit, job, |_, r| out.push(r));
    out
}

//! Bounded worker pool over a slice.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Result;

/// Applies `f` to every item on up to `workers` threads and returns the results
/// in input order. Each item is processed exactly once, so the output does not
/// depend on the worker count. On failure the error of the lowest failing
/// index is returned.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(k, t)| f(k, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let out = f(k, &items[k]);
                slots.lock().expect("worker panicked")[k] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every index is processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_independent_of_workers() {
        let items: Vec<u64> = (0..57).collect();
        let one = par_map(&items, 1, |k, &x| Ok(x * x + k as u64)).unwrap();
        let four = par_map(&items, 4, |k, &x| Ok(x * x + k as u64)).unwrap();
        assert_eq!(one, four);
        assert!(par_map(&[] as &[u8], 3, |_, _| Ok(())).unwrap().is_empty());
    }

    #[test]
    fn lowest_error_wins() {
        let items: Vec<usize> = (0..20).collect();
        let err = par_map(&items, 3, |_, &x| {
            if x % 7 == 6 {
                Err(Error::Config(format!("bad {x}")))
            } else {
                Ok(x)
            }
        })
        .unwrap_err();
        assert_eq!(err.to_string(), "invalid configuration: bad 6");
    }
}

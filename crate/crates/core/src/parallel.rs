//! Scoped worker pool for independent per-subdomain work.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// `(0..count).map(f)` evaluated on up to `threads` scoped workers. Results keep index
/// order, so the output is independent of the thread count.
pub fn map_indexed<T, F>(threads: usize, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(count);
    if threads <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= count {
                    break;
                }
                let value = f(k);
                slots.lock().unwrap()[k] = Some(value);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|v| v.expect("every slot filled")).collect()
}

/// Like [`map_indexed`] for fallible work; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(threads: usize, count: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    map_indexed(threads, count, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for threads in [1, 2, 5] {
            let v = map_indexed(threads, 17, |k| k * k);
            assert_eq!(v, (0..17).map(|k| k * k).collect::<Vec<_>>());
        }
        assert!(map_indexed(3, 0, |k| k).is_empty());
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(3, 10, |k| if k % 4 == 3 { Err(k) } else { Ok(k) });
        assert_eq!(r, Err(3));
    }
}

use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

/// Counting semaphore bounding concurrent network calls.
#[derive(Debug, Clone)]
pub struct InflightLimiter {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InflightLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            inner: Arc::new(Inner {
                max: max.max(1),
                current: Mutex::new(0),
                freed: Condvar::new(),
            }),
        }
    }

    pub fn max(&self) -> usize {
        self.inner.max
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> InflightGuard {
        let mut current = self.inner.current.lock();
        while *current >= self.inner.max {
            self.inner.freed.wait(&mut current);
        }
        *current += 1;
        InflightGuard {
            inner: Arc::clone(&self.inner),
        }
    }

    pub fn in_flight(&self) -> usize {
        *self.inner.current.lock()
    }
}

pub struct InflightGuard {
    inner: Arc<Inner>,
}

impl Drop for InflightGuard {
    fn drop(&mut self) {
        let mut current = self.inner.current.lock();
        *current -= 1;
        self.inner.freed.notify_one();
    }
}

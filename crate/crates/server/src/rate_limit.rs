use std::collections::HashMap;
use std::net::IpAddr;

use parking_lot::Mutex;

const WINDOW_SECS: u64 = 60;

/// Fixed one-minute window counter per client address.
pub struct RateLimiter {
    per_minute: u32,
    windows: Mutex<HashMap<IpAddr, (u64, u32)>>,
}

impl RateLimiter {
    /// `per_minute == 0` disables limiting.
    pub fn new(per_minute: u32) -> Self {
        Self { per_minute, windows: Mutex::new(HashMap::new()) }
    }

    /// Counts one request from `ip` and reports whether it is within the cap.
    pub fn check(&self, ip: IpAddr, now: u64) -> bool {
        if self.per_minute == 0 {
            return true;
        }
        let window = now / WINDOW_SECS;
        let mut windows = self.windows.lock();
        let entry = windows.entry(ip).or_insert((window, 0));
        if entry.0 != window {
            *entry = (window, 0);
        }
        entry.1 += 1;
        entry.1 <= self.per_minute
    }

    pub fn prune(&self, now: u64) {
        let window = now / WINDOW_SECS;
        self.windows.lock().retain(|_, (w, _)| *w == window);
    }
}

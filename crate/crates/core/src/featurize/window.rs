//! Sliding-window mean and population standard deviation over per-chunk
//! aggregates.
//!
//! Each column keeps compensated running sums of `x - shift` and
//! `(x - shift)^2`. The shift is re-centred on the window mean every `k`
//! pushes, and whenever the running mean has drifted far enough from it that
//! the variance formula would lose more than a few bits to cancellation.

use std::collections::VecDeque;

use crate::domain::{Chunk, FeatureVector, PipelineConfig, N_FEATURES};

/// Per-chunk aggregates tracked by the window, in column order.
pub const N_COLUMNS: usize = 6;
const COL_RUSH: usize = 0;
const COL_TRADES: usize = 1;
const COL_VOLUME: usize = 2;
const COL_CLOSE: usize = 3;
const COL_MAX: usize = 4;
const COL_MIN: usize = 5;

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ColumnMoments {
    shift: f64,
    s1: CompensatedSum,
    s2: CompensatedSum,
}

impl ColumnMoments {
    #[inline]
    fn add(&mut self, x: f64) {
        let d = x - self.shift;
        self.s1.add(d);
        self.s2.add(d * d);
    }

    #[inline]
    fn remove(&mut self, x: f64) {
        let d = x - self.shift;
        self.s1.add(-d);
        self.s2.add(-(d * d));
    }

    /// Returns (mean offset from shift, variance).
    #[inline]
    fn moments(&self, n: f64) -> (f64, f64) {
        let m1 = self.s1.value() / n;
        (m1, self.s2.value() / n - m1 * m1)
    }
}

/// Mean and population standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

/// Fixed-capacity window of chunk aggregates with O(1) amortized updates.
#[derive(Debug, Clone)]
pub struct MovingWindow {
    capacity: usize,
    buf: VecDeque<[f64; N_COLUMNS]>,
    cols: [ColumnMoments; N_COLUMNS],
    pushes_since_rebuild: usize,
}

impl MovingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be positive");
        Self {
            capacity,
            buf: VecDeque::with_capacity(capacity),
            cols: [ColumnMoments::default(); N_COLUMNS],
            pushes_since_rebuild: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn push(&mut self, row: [f64; N_COLUMNS]) {
        if self.buf.len() == self.capacity {
            let old = self.buf.pop_front().expect("full window");
            for (c, x) in self.cols.iter_mut().zip(old) {
                c.remove(x);
            }
        }
        self.buf.push_back(row);
        for (c, x) in self.cols.iter_mut().zip(row) {
            c.add(x);
        }
        self.pushes_since_rebuild += 1;
        if self.pushes_since_rebuild >= self.capacity {
            for col in 0..N_COLUMNS {
                self.rebuild(col);
            }
            self.pushes_since_rebuild = 0;
        }
    }

    /// Statistics of every column over the values currently buffered.
    pub fn stats(&mut self) -> [ColumnStats; N_COLUMNS] {
        let mut out = [ColumnStats { mean: 0.0, std: 0.0 }; N_COLUMNS];
        if self.buf.is_empty() {
            return out;
        }
        let n = self.buf.len() as f64;
        for (col, slot) in out.iter_mut().enumerate() {
            let (mut m1, mut var) = self.cols[col].moments(n);
            if var < 0.0 || m1 * m1 > 16.0 * var {
                self.rebuild(col);
                (m1, var) = self.cols[col].moments(n);
            }
            *slot = ColumnStats {
                mean: self.cols[col].shift + m1,
                std: var.max(0.0).sqrt(),
            };
        }
        out
    }

    /// Recomputes a column's sums from the buffer around a fresh shift.
    fn rebuild(&mut self, col: usize) {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, CompensatedSum::default());
        for row in &self.buf {
            let x = row[col];
            lo = lo.min(x);
            hi = hi.max(x);
            sum.add(x);
        }
        // exact shift for constant windows keeps their deviation exactly zero
        let shift = if lo == hi {
            lo
        } else {
            sum.value() / self.buf.len() as f64
        };
        let mut m = ColumnMoments {
            shift,
            ..ColumnMoments::default()
        };
        for row in &self.buf {
            m.add(row[col]);
        }
        self.cols[col] = m;
    }
}

fn chunk_row(c: &Chunk) -> [f64; N_COLUMNS] {
    let mut row = [0.0; N_COLUMNS];
    row[COL_RUSH] = c.rush_volume;
    row[COL_TRADES] = c.n_trades as f64;
    row[COL_VOLUME] = c.quote_volume;
    row[COL_CLOSE] = c.close;
    row[COL_MAX] = c.price_max;
    row[COL_MIN] = c.price_min;
    row
}

fn features_from(stats: &[ColumnStats; N_COLUMNS]) -> [f64; N_FEATURES] {
    [
        stats[COL_RUSH].std,
        stats[COL_RUSH].mean,
        stats[COL_TRADES].std,
        stats[COL_VOLUME].std,
        stats[COL_VOLUME].mean,
        stats[COL_CLOSE].std,
        stats[COL_CLOSE].mean,
        stats[COL_MAX].mean,
        stats[COL_MIN].mean,
    ]
}

/// Turns a stream of closed chunks into feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureEngine {
    window: MovingWindow,
    includes_current: bool,
}

impl FeatureEngine {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            window: MovingWindow::new(config.window_chunks()),
            includes_current: config.window_includes_current,
        }
    }

    /// Feeds the next chunk; returns its feature vector once the window is
    /// warm. Labels are left false.
    pub fn push(&mut self, chunk: &Chunk) -> Option<FeatureVector> {
        let row = chunk_row(chunk);
        if self.includes_current {
            self.window.push(row);
            self.window
                .is_full()
                .then(|| FeatureVector::from_array(chunk.start_ms, features_from(&self.window.stats()), false))
        } else {
            let v = self
                .window
                .is_full()
                .then(|| FeatureVector::from_array(chunk.start_ms, features_from(&self.window.stats()), false));
            self.window.push(row);
            v
        }
    }

    /// Number of chunks held in memory. Never exceeds the window length.
    pub fn buffered_chunks(&self) -> usize {
        self.window.len()
    }
}

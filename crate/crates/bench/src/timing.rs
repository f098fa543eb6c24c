use std::time::Instant;

/// Median of the samples; the mean of the two middle values for even counts.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of no samples");
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len() % 2 == 1 {
        s[mid]
    } else {
        (s[mid - 1] + s[mid]) / 2.0
    }
}

/// Runs `f` once untimed, then `reps` timed times. Returns the median wall
/// time in seconds and the output of the last call.
pub fn time_median<T>(reps: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    assert!(reps >= 1, "at least one repetition");
    let mut last = f();
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        last = std::hint::black_box(f());
        samples.push(start.elapsed().as_secs_f64());
    }
    (median(&samples), last)
}

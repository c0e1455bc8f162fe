/// Largest class count the per-pixel kernels support.
pub const MAX_CLASSES: usize = 16;

/// Euclidean projection of `v` onto the probability simplex, in place.
///
/// Michelot's active-set iteration: the threshold only grows, so every
/// entry at or below it can be dropped at once. Terminates in at most
/// `v.len()` passes.
pub fn project_simplex(v: &mut [f32]) {
    let k = v.len();
    debug_assert!((1..=MAX_CLASSES).contains(&k));
    let mut active = [true; MAX_CLASSES];
    let mut count = k;
    let mut sum: f32 = v.iter().sum();
    let theta = loop {
        let theta = (sum - 1.0) / count as f32;
        let mut changed = false;
        for (a, &x) in active[..k].iter_mut().zip(v.iter()) {
            if *a && x <= theta && count > 1 {
                *a = false;
                count -= 1;
                sum -= x;
                changed = true;
            }
        }
        if !changed {
            break theta;
        }
    };
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

//! Plain-text number formatting shared by every CSV writer.

use crate::num::Real;

/// 17 significant digits in scientific notation, enough to round-trip an
/// `f64` exactly. Non-finite values print as `inf`, `-inf` or `nan`.
pub fn fmt_num<T: Real>(v: T) -> String {
    let v = v.as_f64();
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

/// Joins formatted values with commas.
pub fn csv_row<T: Real>(values: &[T]) -> String {
    values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(",")
}

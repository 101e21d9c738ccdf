//! Plain-text output helpers shared by the CSV writers.

/// Formats a float with 17 significant digits (round-trips every `f64`).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }
}

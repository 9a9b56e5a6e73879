//! Integer-exact percentage formatting shared by every report.
//!
//! All published tables carry two decimal places. To keep the pipeline
//! bit-for-bit reproducible the value is never computed in floating
//! point: the count fraction is first rounded half-up to three decimal
//! places of a percent, then that fixed-point value is rounded to two
//! places with ties going to the even digit. Both stages are pure
//! integer arithmetic.

/// Percentage of `num`/`den` in thousandths of a percent, rounded
/// half-up. `den == 0` yields 0.
pub fn pct_millis(num: u64, den: u64) -> u64 {
    if den == 0 {
        return 0;
    }
    (200_000 * num + den) / (2 * den)
}

/// Percentage of `num`/`den` in hundredths of a percent: the two-stage
/// rounding described in the module docs.
pub fn pct_centis(num: u64, den: u64) -> u64 {
    let millis = pct_millis(num, den);
    let whole = millis / 10;
    match millis % 10 {
        r if r > 5 => whole + 1,
        5 if whole % 2 == 1 => whole + 1,
        _ => whole,
    }
}

/// `num`/`den` as a two-decimal percent string, e.g. `format_pct(15, 279)`
/// is `"5.38"`.
pub fn format_pct(num: usize, den: usize) -> String {
    let centis = pct_centis(num as u64, den as u64);
    format!("{}.{:02}", centis / 100, centis % 100)
}

/// An exact non-negative rational, used to average recall fractions
/// without floating-point drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let left = self.num as u128 * other.den as u128;
        let right = other.num as u128 * self.den as u128;
        left.cmp(&right)
    }
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Ratio {
        assert!(den != 0, "zero denominator");
        Ratio { num, den }.reduced()
    }

    fn reduced(self) -> Ratio {
        if self.num == 0 {
            return Ratio { num: 0, den: 1 };
        }
        let g = gcd(self.num, self.den);
        Ratio { num: self.num / g, den: self.den / g }
    }

    pub fn add(self, other: Ratio) -> Ratio {
        Ratio { num: self.num * other.den + other.num * self.den, den: self.den * other.den }
            .reduced()
    }

    /// Divide by an integer count (for taking a mean).
    pub fn div(self, count: u64) -> Ratio {
        assert!(count != 0, "zero divisor");
        Ratio { num: self.num, den: self.den * count }.reduced()
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    /// The ratio as a two-decimal percent string.
    pub fn format_pct(&self) -> String {
        let centis = pct_centis(self.num, self.den);
        format!("{}.{:02}", centis / 100, centis % 100)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_rates_format_exactly() {
        assert_eq!(format_pct(15, 279), "5.38");
        assert_eq!(format_pct(159, 279), "56.99");
        assert_eq!(format_pct(154, 279), "55.20");
        assert_eq!(format_pct(2, 279), "0.72");
        assert_eq!(format_pct(29, 279), "10.39");
        assert_eq!(format_pct(0, 279), "0.00");
        assert_eq!(format_pct(279, 279), "100.00");
    }

    #[test]
    fn zero_denominator_is_zero() {
        assert_eq!(format_pct(0, 0), "0.00");
        assert_eq!(format_pct(5, 0), "0.00");
    }

    #[test]
    fn first_stage_rounds_half_up() {
        // 100000/1600 = 62.5 exactly → 63 thousandths
        assert_eq!(pct_millis(1, 1600), 63);
        assert_eq!(pct_millis(1, 3), 33_333);
        assert_eq!(pct_millis(2, 3), 66_667);
    }

    #[test]
    fn second_stage_rounds_half_to_even() {
        assert_eq!(pct_centis(1, 800), 12); // 125 thousandths → 0.12
        assert_eq!(pct_centis(27, 20_000), 14); // 135 thousandths → 0.14
        assert_eq!(pct_centis(1, 3), 3_333);
    }

    #[test]
    fn ratios_average_exactly() {
        // (1/2 + 1/3 + 1/4) / 3 = 13/36 → 36.11%
        let sum = Ratio::ZERO.add(Ratio::new(1, 2)).add(Ratio::new(1, 3)).add(Ratio::new(1, 4));
        let mean = sum.div(3);
        assert_eq!((mean.num(), mean.den()), (13, 36));
        assert_eq!(mean.format_pct(), "36.11");
    }
}

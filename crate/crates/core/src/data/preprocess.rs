/// First and last Bangla digit code points (০ through ৯).
pub const BANGLA_DIGITS: std::ops::RangeInclusive<char> = '\u{09E6}'..='\u{09EF}';

pub fn is_bangla_digit(c: char) -> bool {
    BANGLA_DIGITS.contains(&c)
}

/// Removes Bangla digits and leaves every other character, whitespace
/// included, exactly as it was.
pub fn preprocess(text: &str) -> String {
    text.chars().filter(|&c| !is_bangla_digit(c)).collect()
}

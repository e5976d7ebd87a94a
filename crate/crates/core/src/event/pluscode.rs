//! Open Location Code ("plus code") helpers for 10-digit codes.

const ALPHABET: &[u8; 20] = b"23456789CFGHJMPQRVWX";
/// Grid cells per degree at 10-digit precision (1 / 0.000125).
const CELLS_PER_DEGREE: i64 = 8_000;

fn digit_value(c: u8) -> Option<usize> {
    ALPHABET.iter().position(|&a| a == c)
}

/// Checks the `XXXXXXXX+XX` shape, the alphabet, and the range of the two
/// most significant digits.
pub fn is_valid_10(code: &str) -> bool {
    let bytes = code.as_bytes();
    if bytes.len() != 11 || bytes[8] != b'+' {
        return false;
    }
    let mut digits = bytes[..8].iter().chain(&bytes[9..]);
    if !digits.all(|&c| digit_value(c).is_some()) {
        return false;
    }
    // First latitude digit covers 20 degrees of 180, first longitude digit 20 of 360.
    digit_value(bytes[0]).is_some_and(|d| d < 9) && digit_value(bytes[1]).is_some_and(|d| d < 18)
}

/// `8FVC9G8F+6X` -> `8FVC9G8F+`.
pub fn prefix8(code: &str) -> String {
    let mut s: String = code.chars().take(8).collect();
    s.push('+');
    s
}

/// Encodes a coordinate at 10-digit (roughly 14 m) precision.
pub fn encode(latitude: f64, longitude: f64) -> String {
    let lat = latitude.clamp(-90.0, 90.0);
    let lng = (longitude + 180.0).rem_euclid(360.0);
    let max_lat_cells = 180 * CELLS_PER_DEGREE - 1;
    let mut lat_cells = (((lat + 90.0) * CELLS_PER_DEGREE as f64).floor() as i64).min(max_lat_cells);
    let mut lng_cells = ((lng * CELLS_PER_DEGREE as f64).floor() as i64) % (360 * CELLS_PER_DEGREE);

    let mut pairs = [(0usize, 0usize); 5];
    for pair in pairs.iter_mut().rev() {
        *pair = ((lat_cells % 20) as usize, (lng_cells % 20) as usize);
        lat_cells /= 20;
        lng_cells /= 20;
    }
    let mut out = String::with_capacity(11);
    for (i, (la, ln)) in pairs.iter().enumerate() {
        if i == 4 {
            out.push('+');
        }
        out.push(ALPHABET[*la] as char);
        out.push(ALPHABET[*ln] as char);
    }
    out
}

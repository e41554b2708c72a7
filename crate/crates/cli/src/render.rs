use std::fmt::Write;

use crate::response::ScoreResponse;

const RESET: &str = "\x1b[0m";

/// Five-step red → green scale: bucket 0 is insecure, 4 secure.
pub fn bucket_color(bucket: u8) -> &'static str {
    match bucket {
        0 => "\x1b[1;37;41m", // red
        1 => "\x1b[1;30;101m", // light red
        2 => "\x1b[1;30;43m", // yellow
        3 => "\x1b[1;30;102m", // light green
        _ => "\x1b[1;30;42m", // green
    }
}

pub fn render_tty(resp: &ScoreResponse) -> String {
    let mut out = String::new();
    for c in &resp.characters {
        let _ = write!(out, "{} {} {RESET}", bucket_color(c.bucket), c.character);
    }
    let _ = writeln!(out, "  S(x) = {:.3}", resp.log_score);
    for c in &resp.characters {
        let subs: String = c.substitutes.iter().collect();
        let _ = writeln!(out, "  {:>2} {:?} q={:.4} bucket={} try: {}", c.position, c.character, c.q, c.bucket, subs);
    }
    out
}

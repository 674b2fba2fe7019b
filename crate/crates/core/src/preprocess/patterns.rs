//! Address and file-path masking.
//!
//! Regexes find candidates; boundary rules that need context on either side of a
//! match are checked by hand since the regex engine has no look-around.

use std::net::Ipv6Addr;
use std::sync::LazyLock;

use regex::Regex;

pub const ADDRESS_TOKEN: &str = "address";
pub const FILEPATH_TOKEN: &str = "filepath";

static MAC_COLON: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[0-9a-f]{2}(?::[0-9a-f]{2}){5}").unwrap());
static MAC_HYPHEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[0-9a-f]{2}(?:-[0-9a-f]{2}){5}").unwrap());
static IPV6_CANDIDATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[0-9a-f:.]*:[0-9a-f:.]*").unwrap());
static IPV4: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[0-9]{1,3}(?:\.[0-9]{1,3}){3}").unwrap());
static UNIX_PATH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"/[a-z0-9._~+\-]+(?:/[a-z0-9._~+\-]+)+/?").unwrap()
});
static WINDOWS_PATH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[a-z]:(?:\\+[a-z0-9._~+\-]+)+\\?").unwrap());

fn is_word(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

fn char_before(s: &str, at: usize) -> Option<char> {
    s[..at].chars().next_back()
}

fn char_after(s: &str, at: usize) -> Option<char> {
    s[at..].chars().next()
}

/// Replaces every accepted match of `re` with `word`. `accept` may shrink the span
/// or reject it; after a rejection the search resumes one byte further on (matches
/// always start on an ASCII byte, so that is a char boundary).
fn replace_checked<F>(s: &str, re: &Regex, word: &str, accept: F) -> String
where
    F: Fn(&str, usize, usize) -> Option<(usize, usize)>,
{
    let mut out = String::with_capacity(s.len());
    let mut copied = 0;
    let mut from = 0;
    while from <= s.len() {
        let Some(m) = re.find_at(s, from) else { break };
        match accept(s, m.start(), m.end()) {
            Some((a, b)) => {
                out.push_str(&s[copied..a]);
                out.push_str(word);
                copied = b;
                from = if b > a { b } else { b + 1 };
            }
            None => from = m.start() + 1,
        }
    }
    out.push_str(&s[copied..]);
    out
}

fn mac_accept(sep: char) -> impl Fn(&str, usize, usize) -> Option<(usize, usize)> {
    move |s, a, b| {
        let bad = |c: char| is_word(c) || c == sep;
        if char_before(s, a).is_some_and(bad) || char_after(s, b).is_some_and(bad) {
            None
        } else {
            Some((a, b))
        }
    }
}

fn ipv6_accept(s: &str, a: usize, b: usize) -> Option<(usize, usize)> {
    let candidate = s[a..b].trim_end_matches('.');
    let b = a + candidate.len();
    let colons = candidate.bytes().filter(|&c| c == b':').count();
    if !candidate.contains("::") && colons < 7 {
        return None;
    }
    if char_before(s, a).is_some_and(is_word) || char_after(s, b).is_some_and(is_word) {
        return None;
    }
    candidate.parse::<Ipv6Addr>().ok().map(|_| (a, b))
}

fn ipv4_accept(s: &str, a: usize, b: usize) -> Option<(usize, usize)> {
    if char_before(s, a).is_some_and(|c| is_word(c) || c == '.') {
        return None;
    }
    match char_after(s, b) {
        Some(c) if is_word(c) => None,
        Some('.') if s[b + 1..].starts_with(|c: char| c.is_ascii_digit()) => None,
        _ => Some((a, b)),
    }
}

fn path_accept(s: &str, a: usize, b: usize) -> Option<(usize, usize)> {
    let b = a + s[a..b].trim_end_matches('.').len();
    let glued = |c: char| is_word(c) || matches!(c, '.' | '/' | ':' | '\\' | '~' | '-');
    // take in a leading `./`, `../` or `~/`
    let prefix = s[..a].bytes().rev().take_while(|&c| c == b'.' || c == b'~').count();
    let a = match &s[a - prefix..a] {
        "." | ".." | "~" => a - prefix,
        _ => a,
    };
    if char_before(s, a).is_some_and(glued) {
        None
    } else {
        Some((a, b))
    }
}

/// Masks IPv4, IPv6 and MAC addresses with the literal `address`.
///
/// IPv6 candidates must either use `::` compression or spell out all eight groups,
/// and must parse as a valid address; this keeps clock times like `10:30` intact.
pub fn replace_addresses(s: &str) -> String {
    let s = replace_checked(s, &MAC_COLON, ADDRESS_TOKEN, mac_accept(':'));
    let s = replace_checked(&s, &MAC_HYPHEN, ADDRESS_TOKEN, mac_accept('-'));
    let s = replace_checked(&s, &IPV6_CANDIDATE, ADDRESS_TOKEN, ipv6_accept);
    replace_checked(&s, &IPV4, ADDRESS_TOKEN, ipv4_accept)
}

/// Masks Unix paths with at least two segments and drive-letter Windows paths.
pub fn replace_filepaths(s: &str) -> String {
    let s = replace_checked(s, &UNIX_PATH, FILEPATH_TOKEN, path_accept);
    replace_checked(&s, &WINDOWS_PATH, FILEPATH_TOKEN, path_accept)
}

/// Extracts `CWE-<digits>` identifiers (case-insensitive), normalized to
/// upper case, deduplicated in order of first appearance.
pub fn parse_cwes(response: &str) -> Vec<String> {
    let bytes = response.as_bytes();
    let mut found: Vec<String> = Vec::new();
    let mut i = 0;
    while i + 4 <= bytes.len() {
        let is_prefix = bytes[i].eq_ignore_ascii_case(&b'c')
            && bytes[i + 1].eq_ignore_ascii_case(&b'w')
            && bytes[i + 2].eq_ignore_ascii_case(&b'e')
            && bytes[i + 3] == b'-';
        if !is_prefix {
            i += 1;
            continue;
        }
        let start = i + 4;
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end == start {
            i += 1;
            continue;
        }
        let id = format!("CWE-{}", &response[start..end]);
        if !found.contains(&id) {
            found.push(id);
        }
        i = end;
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            parse_cwes("CWE-798 hardcoded credentials; also CWE-798"),
            ["CWE-798"]
        );
        assert!(parse_cwes("No issues found.").is_empty());
        assert_eq!(parse_cwes("cwe-732 and CWE-319"), ["CWE-732", "CWE-319"]);
    }

    #[test]
    fn edge_cases() {
        assert!(parse_cwes("CWE-").is_empty());
        assert!(parse_cwes("CWE-x12").is_empty());
        assert_eq!(parse_cwes("CWE-CWE-12"), ["CWE-12"]);
        assert_eq!(parse_cwes("(CwE-20),cwe-020"), ["CWE-20", "CWE-020"]);
        assert_eq!(parse_cwes("é CWE-1 ü"), ["CWE-1"]);
    }
}

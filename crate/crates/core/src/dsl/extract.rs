use super::ExtractError;

/// Splits a model reply into `(description, rule text)`.
///
/// The description is the first balanced `{...}` span. The rule is the body
/// of the first fenced code block or, without fences, whatever follows the
/// description.
pub fn extract_candidate(reply: &str) -> Result<(String, String), ExtractError> {
    let open = reply.find('{').ok_or(ExtractError::MissingDescription)?;
    let mut depth = 0usize;
    let mut close = None;
    for (k, c) in reply[open..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(open + k);
                    break;
                }
            }
            _ => {}
        }
    }
    let close = close.ok_or(ExtractError::MissingDescription)?;
    let description = reply[open + 1..close].trim().to_string();

    let body = match fenced_block(reply) {
        Some(b) => b,
        None => &reply[close + 1..],
    };
    let body = body.trim();
    if body.is_empty() {
        return Err(ExtractError::EmptyBody);
    }
    Ok((description, body.to_string()))
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")? + 3;
    let rest = &text[start..];
    // an info string such as ```dsl runs to the end of the fence line
    let body_start = match rest.find('\n') {
        Some(nl) if !rest[..nl].trim().contains(char::is_whitespace) && !rest[..nl].contains("```") => nl + 1,
        _ => 0,
    };
    let rest = &rest[body_start..];
    let end = rest.find("```").unwrap_or(rest.len());
    Some(&rest[..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed() {
        let r = extract_candidate("{Balances rate and cost}\n```\nsqrt(app_rate)/cost\n```").unwrap();
        assert_eq!(r, ("Balances rate and cost".to_string(), "sqrt(app_rate)/cost".to_string()));
    }

    #[test]
    fn info_string_and_first_fence() {
        let reply = "Idea: {prefer cheap {popular} ones}\n```dsl\napp_rate/cost\n```\nor\n```\ncost\n```";
        let (d, b) = extract_candidate(reply).unwrap();
        assert_eq!(d, "prefer cheap {popular} ones");
        assert_eq!(b, "app_rate/cost");
    }

    #[test]
    fn no_fence_takes_remainder() {
        let (d, b) = extract_candidate("{rate} app_rate * 2 ").unwrap();
        assert_eq!((d.as_str(), b.as_str()), ("rate", "app_rate * 2"));
        let (_, b) = extract_candidate("{x}\n```app_rate```").unwrap();
        assert_eq!(b, "app_rate");
    }

    #[test]
    fn failures() {
        assert_eq!(extract_candidate("sqrt(app_rate)"), Err(ExtractError::MissingDescription));
        assert_eq!(extract_candidate("{unclosed sqrt(app_rate)"), Err(ExtractError::MissingDescription));
        assert_eq!(extract_candidate("{only words}"), Err(ExtractError::EmptyBody));
        assert_eq!(extract_candidate("{d}\n```\n\n```"), Err(ExtractError::EmptyBody));
    }
}

use crate::packer::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThinkSplit<'a> {
    pub think: &'a str,
    pub post: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThinkError {
    Unterminated,
}

const RESPONSE_OPEN: &str = "<response>";
const RESPONSE_CLOSE: &str = "</response>";

/// Splits a completion into its first reasoning span and what follows it.
///
/// A completion whose prompt already opened the reasoning span has no open
/// tag; the text up to the first close tag is then taken as the span. For
/// `ernie-thinking`, `post` is the content of the `<response>` block when
/// one is present.
pub fn extract_think(raw: &str, family: Family) -> Result<ThinkSplit<'_>, ThinkError> {
    let (open, close) = family.think_tags();
    let (think, post) = match (raw.find(open), raw.find(close)) {
        (Some(o), _) => {
            let start = o + open.len();
            let end = raw[start..].find(close).ok_or(ThinkError::Unterminated)? + start;
            (&raw[start..end], &raw[end + close.len()..])
        }
        (None, Some(c)) => (&raw[..c], &raw[c + close.len()..]),
        (None, None) => return Err(ThinkError::Unterminated),
    };
    let post = if family == Family::ErnieThinking {
        response_block(post).unwrap_or(post)
    } else {
        post
    };
    Ok(ThinkSplit { think, post })
}

/// Everything after an open tag (or the whole text if the span was pre-opened),
/// for completions cut off before the close tag.
pub fn unterminated_think(raw: &str, family: Family) -> &str {
    let (open, _) = family.think_tags();
    match raw.find(open) {
        Some(o) => &raw[o + open.len()..],
        None => raw,
    }
}

fn response_block(post: &str) -> Option<&str> {
    let start = post.find(RESPONSE_OPEN)? + RESPONSE_OPEN.len();
    let end = post[start..]
        .find(RESPONSE_CLOSE)
        .map_or(post.len(), |e| e + start);
    Some(&post[start..end])
}

//! Minimal element tree over quick-xml. Names are stored without namespace
//! prefixes and looked up case-insensitively, so foreign writers with other
//! prefixes or capitalisation parse the same.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::ParseError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub text: String,
    pub children: Vec<Element>,
}

impl Element {
    pub fn is(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.is(name))
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter(move |c| c.is(name))
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Trimmed text of a direct child, or an attribute of the same name.
    pub fn field(&self, name: &str) -> Option<String> {
        self.child(name)
            .map(|c| c.text.trim().to_string())
            .or_else(|| self.attr(name).map(str::to_string))
    }

    /// Depth-first search, including `self`.
    pub fn find_all<'a>(&'a self, name: &str, out: &mut Vec<&'a Element>) {
        if self.is(name) {
            out.push(self);
        }
        for c in &self.children {
            c.find_all(name, out);
        }
    }
}

fn local(name: &[u8]) -> String {
    let s = String::from_utf8_lossy(name);
    match s.rsplit_once(':') {
        Some((_, l)) => l.to_string(),
        None => s.into_owned(),
    }
}

fn start_element(e: &BytesStart<'_>) -> Result<Element, ParseError> {
    let mut el = Element {
        name: local(e.name().as_ref()),
        ..Element::default()
    };
    for attr in e.attributes().with_checks(false) {
        let attr = attr.map_err(|err| ParseError::MalformedXml(err.to_string()))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        if key == "xmlns" || key.starts_with("xmlns:") {
            continue;
        }
        let value = attr
            .unescape_value()
            .map_err(|err| ParseError::MalformedXml(err.to_string()))?;
        el.attrs.push((local(key.as_bytes()), value.into_owned()));
    }
    Ok(el)
}

/// Parses a whole document and returns its root element.
pub fn parse_document(text: &str) -> Result<Element, ParseError> {
    parse(text, false)
}

/// Like [`parse_document`], but elements still open at end of input are
/// closed implicitly, so a truncated capture yields what it holds.
pub fn parse_fragment(text: &str) -> Result<Element, ParseError> {
    parse(text, true)
}

fn parse(text: &str, auto_close: bool) -> Result<Element, ParseError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| ParseError::MalformedXml(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(e) => stack.push(start_element(&e)?),
            Event::Empty(e) => {
                let el = start_element(&e)?;
                attach(&mut stack, &mut root, el)?;
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| ParseError::MalformedXml("unbalanced end tag".into()))?;
                attach(&mut stack, &mut root, el)?;
            }
            Event::Text(t) => {
                let text = t
                    .unescape()
                    .map_err(|e| ParseError::MalformedXml(e.to_string()))?;
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&text);
                }
            }
            Event::CData(c) => {
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&String::from_utf8_lossy(&c.into_inner()));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    while auto_close && !stack.is_empty() {
        let el = stack.pop().expect("non-empty");
        attach(&mut stack, &mut root, el)?;
    }
    if let Some(open) = stack.last() {
        return Err(ParseError::MalformedXml(format!(
            "unexpected end of document inside <{}>",
            open.name
        )));
    }
    root.ok_or_else(|| ParseError::MalformedXml("no root element".into()))
}

fn attach(stack: &mut [Element], root: &mut Option<Element>, el: Element) -> Result<(), ParseError> {
    match stack.last_mut() {
        Some(parent) => parent.children.push(el),
        None if root.is_none() => *root = Some(el),
        None => return Err(ParseError::MalformedXml("multiple root elements".into())),
    }
    Ok(())
}

/// Escapes text for element content and attribute values.
pub fn escape(text: &str) -> String {
    quick_xml::escape::escape(text).into_owned()
}

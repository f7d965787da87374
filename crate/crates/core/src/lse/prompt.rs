use serde::{Deserialize, Serialize};

use super::sidb::{Annotation, SidbEntry};
use super::LseError;

pub const DEFAULT_TEMPLATE: &str = include_str!("default_prompt.txt");

/// Line separating the optional system part from the user part.
pub const SYSTEM_SEPARATOR: &str = "---";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Raw,
    Context,
    TargetClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

/// Text with `{RAW}`, `{CONTEXT}` and `{TARGET_CLASS}` placeholders; `{{` and
/// `}}` stand for literal braces. Substituted values are never re-scanned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    system: Vec<Piece>,
    user: Vec<Piece>,
}

fn parse_pieces(text: &str) -> Vec<Piece> {
    const SLOTS: [(&str, Slot); 3] = [
        ("{RAW}", Slot::Raw),
        ("{CONTEXT}", Slot::Context),
        ("{TARGET_CLASS}", Slot::TargetClass),
    ];
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut rest = text;
    'outer: while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") || rest.starts_with("}}") {
            lit.push(c);
            rest = &rest[2..];
            continue;
        }
        if c == '{' {
            for (name, slot) in SLOTS {
                if let Some(after) = rest.strip_prefix(name) {
                    if !lit.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut lit)));
                    }
                    pieces.push(Piece::Slot(slot));
                    rest = after;
                    continue 'outer;
                }
            }
        }
        lit.push(c);
        rest = &rest[c.len_utf8()..];
    }
    if !lit.is_empty() {
        pieces.push(Piece::Text(lit));
    }
    pieces
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, LseError> {
        let mut system_part = "";
        let mut user_part = text;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if line.trim_end_matches(['\r', '\n']) == SYSTEM_SEPARATOR {
                system_part = &text[..offset];
                user_part = &text[offset + line.len()..];
                break;
            }
            offset += line.len();
        }
        let t = Self {
            system: parse_pieces(system_part.trim_end()),
            user: parse_pieces(user_part),
        };
        for (slot, name) in [
            (Slot::Raw, "{RAW}"),
            (Slot::Context, "{CONTEXT}"),
            (Slot::TargetClass, "{TARGET_CLASS}"),
        ] {
            if !t
                .system
                .iter()
                .chain(&t.user)
                .any(|p| *p == Piece::Slot(slot))
            {
                return Err(LseError::Template(format!("missing placeholder {name}")));
            }
        }
        Ok(t)
    }

    pub fn default_template() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }

    fn render(pieces: &[Piece], raw: &str, context: &str, target: &str) -> String {
        let mut out = String::new();
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(Slot::Raw) => out.push_str(raw),
                Piece::Slot(Slot::Context) => out.push_str(context),
                Piece::Slot(Slot::TargetClass) => out.push_str(target),
            }
        }
        out
    }
}

/// `<class> at (x.xx, y.yy, z.zz): <text>`, or `<class>: <text>` without a location.
pub fn context_line(entry: &SidbEntry) -> String {
    match entry.center {
        Some([x, y, z]) => format!(
            "{} at ({x:.2}, {y:.2}, {z:.2}): {}",
            entry.object_class, entry.text
        ),
        None => format!("{}: {}", entry.object_class, entry.text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    /// The raw description, verbatim.
    pub raw: String,
    pub target_class: String,
    /// Object class of each context line, in prompt order.
    pub context_classes: Vec<String>,
}

pub fn assemble_prompt(
    raw: &Annotation,
    context: &[&SidbEntry],
    template: &PromptTemplate,
) -> PromptBundle {
    let lines: Vec<String> = context.iter().map(|e| context_line(e)).collect();
    let ctx = lines.join("\n");
    PromptBundle {
        system: PromptTemplate::render(&template.system, &raw.text, &ctx, &raw.target_class),
        user: PromptTemplate::render(&template.user, &raw.text, &ctx, &raw.target_class),
        raw: raw.text.clone(),
        target_class: raw.target_class.clone(),
        context_classes: context.iter().map(|e| e.object_class.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(text: &str) -> Annotation {
        Annotation {
            desc_id: "d".into(),
            scene_id: "s".into(),
            text: text.into(),
            target_class: "chair".into(),
            anchor_classes: vec![],
            target_box: None,
        }
    }

    fn entry(class: &str, center: Option<[f64; 3]>) -> SidbEntry {
        SidbEntry {
            desc_id: "e".into(),
            text: "it is here".into(),
            object_class: class.into(),
            center,
            bbox: None,
        }
    }

    #[test]
    fn placeholders_and_escapes() {
        let t = PromptTemplate::parse("sys {TARGET_CLASS}\n---\n{{x}} {RAW}|{CONTEXT}|{other}")
            .unwrap();
        let b = assemble_prompt(&ann("a {CONTEXT} {{b}}"), &[], &t);
        assert_eq!(b.system, "sys chair");
        assert_eq!(b.user, "{x} a {CONTEXT} {{b}}||{other}");
        assert!(b.user.contains(&b.raw));
    }

    #[test]
    fn missing_placeholder() {
        assert!(matches!(
            PromptTemplate::parse("{RAW} {CONTEXT}"),
            Err(LseError::Template(_))
        ));
        assert!(PromptTemplate::parse("{{RAW}} {CONTEXT} {TARGET_CLASS}").is_err());
    }

    #[test]
    fn context_lines() {
        assert_eq!(
            context_line(&entry("lamp", Some([1.0, 2.0, 3.0]))),
            "lamp at (1.00, 2.00, 3.00): it is here"
        );
        assert_eq!(
            context_line(&entry("desk", Some([-0.125, 10.456, 0.0]))),
            "desk at (-0.12, 10.46, 0.00): it is here"
        );
        assert_eq!(context_line(&entry("desk", None)), "desk: it is here");
    }

    #[test]
    fn default_template_shape() {
        let t = PromptTemplate::default_template();
        let e = entry("lamp", Some([1.0, 2.0, 3.0]));
        let b = assemble_prompt(&ann("the chair by the window"), &[&e], &t);
        assert!(!b.system.is_empty());
        assert!(b.user.contains("the chair by the window"));
        assert!(b.user.contains("(1.00, 2.00, 3.00)"));
        assert_eq!(b.context_classes, ["lamp"]);
        let count_context = |user: &str| {
            user.lines()
                .skip_while(|l| !l.starts_with("Other descriptions"))
                .skip(1)
                .take_while(|l| !l.is_empty())
                .count()
        };
        assert_eq!(count_context(&b.user), 1);
        assert_eq!(
            count_context(&assemble_prompt(&ann("the chair"), &[], &t).user),
            0
        );
    }
}

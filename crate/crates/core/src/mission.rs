//! Mission files (`abyssal-mission/1`).
//!
//! ```text
//! # comments run to end of line
//! mission <id> [safety|human|communication|normal]
//! <subject> <action> [<target-kind> <args...>]
//! ```
//!
//! Target kinds are `object <id>`, `class <name>`, `region <cx> <cy> <w> <h>`,
//! `robot <id>` and `station <id>`. Tokens are separated by any whitespace and
//! blank lines are ignored. `collect` is accepted as a synonym of `manipulate`.

use crate::knowledge::ActionKind;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const MEDIA_LABEL: &str = "abyssal-mission/1";

/// Mission priority; the derive order is the override order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    #[default]
    Normal,
    Communication,
    Human,
    Safety,
}

impl Priority {
    pub const ALL: [Priority; 4] =
        [Priority::Normal, Priority::Communication, Priority::Human, Priority::Safety];

    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Normal => "normal",
            Priority::Communication => "communication",
            Priority::Human => "human",
            Priority::Safety => "safety",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Priority {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Priority::ALL.into_iter().find(|p| p.as_str() == s).ok_or(())
    }
}

/// Rectangular area, axis aligned, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Region {
    pub fn new(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Region { center: [cx, cy], width, height }
    }

    pub fn is_valid(&self) -> bool {
        self.center.iter().all(|c| c.is_finite())
            && self.width.is_finite()
            && self.height.is_finite()
            && self.width > 0.0
            && self.height > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetRef {
    Object { id: String },
    Class { name: String },
    Region(Region),
    Robot { id: String },
    Station { id: String },
}

impl TargetRef {
    fn kind_name(&self) -> &'static str {
        match self {
            TargetRef::Object { .. } => "object",
            TargetRef::Class { .. } => "class",
            TargetRef::Region(_) => "region",
            TargetRef::Robot { .. } => "robot",
            TargetRef::Station { .. } => "station",
        }
    }
}

impl fmt::Display for TargetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetRef::Object { id } => write!(f, "object {id}"),
            TargetRef::Class { name } => write!(f, "class {name}"),
            TargetRef::Region(r) => {
                write!(f, "region {} {} {} {}", r.center[0], r.center[1], r.width, r.height)
            }
            TargetRef::Robot { id } => write!(f, "robot {id}"),
            TargetRef::Station { id } => write!(f, "station {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub subject: String,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetRef>,
}

impl Task {
    pub fn new(subject: impl Into<String>, action: ActionKind, target: Option<TargetRef>) -> Self {
        Task { subject: subject.into(), action, target }
    }

    /// Checks that the target kind is one the action accepts.
    pub fn check_arity(&self) -> Result<(), String> {
        use ActionKind::*;
        let kind = self.target.as_ref().map(TargetRef::kind_name);
        let allowed: &[&str] = match self.action {
            Observe | Touch | Manipulate => &["object", "class"],
            Navigate => &["object", "class", "region", "robot", "station"],
            Communicate => &["robot", "station"],
            Survey => &["region"],
            Dock | Undock => &[],
        };
        let optional = matches!(self.action, Survey | Dock | Undock);
        match kind {
            None if optional => Ok(()),
            None => Err(format!("`{}` requires a target ({})", self.action, allowed.join("|"))),
            Some(k) if allowed.contains(&k) => Ok(()),
            Some(k) if allowed.is_empty() => Err(format!("`{}` takes no target, got {k}", self.action)),
            Some(k) => Err(format!(
                "`{}` cannot target a {k} (expected {})",
                self.action,
                allowed.join("|")
            )),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.subject, self.action)?;
        if let Some(t) = &self.target {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MissionError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("arity error at line {line}: {message}")]
    Arity { line: usize, message: String },
    #[error("unknown action `{word}` at {line}:{column}")]
    UnknownAction { line: usize, column: usize, word: String },
}

/// A parsed mission. Fields are private so every value satisfies the
/// non-empty and arity invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MissionDocument", into = "MissionDocument")]
pub struct Mission {
    id: String,
    priority: Priority,
    tasks: Vec<Task>,
}

#[derive(Serialize, Deserialize)]
struct MissionDocument {
    mission_id: String,
    priority: Priority,
    tasks: Vec<Task>,
}

impl TryFrom<MissionDocument> for Mission {
    type Error = MissionError;
    fn try_from(d: MissionDocument) -> Result<Self, Self::Error> {
        Mission::new(d.mission_id, d.priority, d.tasks)
    }
}

impl From<Mission> for MissionDocument {
    fn from(m: Mission) -> Self {
        MissionDocument { mission_id: m.id, priority: m.priority, tasks: m.tasks }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Mission {
    pub fn new(id: impl Into<String>, priority: Priority, tasks: Vec<Task>) -> Result<Self, MissionError> {
        let id = id.into();
        if !is_identifier(&id) {
            return Err(MissionError::Syntax { line: 1, column: 1, message: format!("invalid mission id `{id}`") });
        }
        if tasks.is_empty() {
            return Err(MissionError::Syntax { line: 2, column: 1, message: "mission has no tasks".into() });
        }
        for (i, task) in tasks.iter().enumerate() {
            let line = i + 2;
            if !is_identifier(&task.subject) {
                return Err(MissionError::Syntax {
                    line,
                    column: 1,
                    message: format!("invalid subject `{}`", task.subject),
                });
            }
            task.check_arity().map_err(|message| MissionError::Arity { line, message })?;
            if let Some(TargetRef::Region(r)) = &task.target {
                if !r.is_valid() {
                    return Err(MissionError::Syntax {
                        line,
                        column: 1,
                        message: "region width and height must be positive".into(),
                    });
                }
            }
            if let Some(id) = target_ids(task.target.as_ref()) {
                if !is_identifier(id) {
                    return Err(MissionError::Syntax { line, column: 1, message: format!("invalid identifier `{id}`") });
                }
            }
        }
        Ok(Mission { id, priority, tasks })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn priority(&self) -> Priority {
        self.priority
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// Canonical text form; `parse_mission(&m.render()) == Ok(m)`.
    pub fn render(&self) -> String {
        let mut out = format!("mission {} {}\n", self.id, self.priority);
        for t in &self.tasks {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }
}

fn target_ids(target: Option<&TargetRef>) -> Option<&str> {
    match target? {
        TargetRef::Object { id } | TargetRef::Robot { id } | TargetRef::Station { id } => Some(id),
        TargetRef::Class { name } => Some(name),
        TargetRef::Region(_) => None,
    }
}

impl FromStr for Mission {
    type Err = MissionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_mission(s)
    }
}

pub fn render_mission(mission: &Mission) -> String {
    mission.render()
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (col, (byte, ch)) in code.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                tokens.push(Token { text: &code[b..byte], column: c + 1 });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        tokens.push(Token { text: &code[b..], column: c + 1 });
    }
    tokens
}

struct LineCursor<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_column: usize,
}

impl<'a> LineCursor<'a> {
    fn next(&mut self, what: &str) -> Result<Token<'a>, MissionError> {
        let tok = self.tokens.get(self.pos).copied().ok_or_else(|| MissionError::Syntax {
            line: self.line,
            column: self.end_column,
            message: format!("expected {what}"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn ident(&mut self, what: &str) -> Result<String, MissionError> {
        let tok = self.next(what)?;
        if !is_identifier(tok.text) {
            return Err(MissionError::Syntax {
                line: self.line,
                column: tok.column,
                message: format!("expected {what}, found `{}`", tok.text),
            });
        }
        Ok(tok.text.to_string())
    }

    fn number(&mut self, what: &str) -> Result<f64, MissionError> {
        let tok = self.next(what)?;
        tok.text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| MissionError::Syntax {
            line: self.line,
            column: tok.column,
            message: format!("expected {what}, found `{}`", tok.text),
        })
    }

    fn finish(&self) -> Result<(), MissionError> {
        match self.tokens.get(self.pos) {
            None => Ok(()),
            Some(tok) => Err(MissionError::Syntax {
                line: self.line,
                column: tok.column,
                message: format!("unexpected `{}`", tok.text),
            }),
        }
    }
}

fn parse_target(cur: &mut LineCursor<'_>) -> Result<Option<TargetRef>, MissionError> {
    let Some(kind) = cur.tokens.get(cur.pos).copied() else {
        return Ok(None);
    };
    cur.pos += 1;
    let target = match kind.text {
        "object" => TargetRef::Object { id: cur.ident("object id")? },
        "class" => TargetRef::Class { name: cur.ident("class name")? },
        "robot" => TargetRef::Robot { id: cur.ident("robot id")? },
        "station" => TargetRef::Station { id: cur.ident("station id")? },
        "region" => {
            let cx = cur.number("region center x")?;
            let cy = cur.number("region center y")?;
            let w_col = cur.tokens.get(cur.pos).map_or(cur.end_column, |t| t.column);
            let w = cur.number("region width")?;
            let h = cur.number("region height")?;
            let region = Region::new(cx, cy, w, h);
            if !region.is_valid() {
                return Err(MissionError::Syntax {
                    line: cur.line,
                    column: w_col,
                    message: "region width and height must be positive".into(),
                });
            }
            TargetRef::Region(region)
        }
        other => {
            return Err(MissionError::Syntax {
                line: cur.line,
                column: kind.column,
                message: format!("unknown target kind `{other}`"),
            })
        }
    };
    Ok(Some(target))
}

/// Parses a mission file. Every failure carries its line (and column where
/// a token is to blame).
pub fn parse_mission(text: &str) -> Result<Mission, MissionError> {
    let mut header: Option<(String, Priority)> = None;
    let mut tasks = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        let end_column = raw.chars().count() + 1;
        let mut cur = LineCursor { line, tokens, pos: 0, end_column };
        if header.is_none() {
            let kw = cur.next("`mission`")?;
            if kw.text != "mission" {
                return Err(MissionError::Syntax {
                    line,
                    column: kw.column,
                    message: format!("expected `mission` header, found `{}`", kw.text),
                });
            }
            let id = cur.ident("mission id")?;
            let priority = match cur.tokens.get(cur.pos).copied() {
                None => Priority::Normal,
                Some(tok) => {
                    cur.pos += 1;
                    tok.text.parse().map_err(|_| MissionError::Syntax {
                        line,
                        column: tok.column,
                        message: format!("unknown priority `{}`", tok.text),
                    })?
                }
            };
            cur.finish()?;
            header = Some((id, priority));
            continue;
        }
        let subject = cur.ident("subject")?;
        let action_tok = cur.next("action")?;
        let action: ActionKind = action_tok.text.parse().map_err(|_| MissionError::UnknownAction {
            line,
            column: action_tok.column,
            word: action_tok.text.to_string(),
        })?;
        let target = parse_target(&mut cur)?;
        cur.finish()?;
        let task = Task { subject, action, target };
        task.check_arity().map_err(|message| MissionError::Arity { line, message })?;
        tasks.push(task);
    }
    let Some((id, priority)) = header else {
        return Err(MissionError::Syntax { line: 1, column: 1, message: "missing `mission` header".into() });
    };
    if tasks.is_empty() {
        return Err(MissionError::Syntax {
            line: text.split('\n').count(),
            column: 1,
            message: "unexpected end of input: mission has no tasks".into(),
        });
    }
    Ok(Mission { id, priority, tasks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survey_then_dock() {
        let m = parse_mission("mission m1 normal\nalpha survey region 0 0 40 20\nalpha dock").unwrap();
        assert_eq!(m.id(), "m1");
        assert_eq!(m.tasks().len(), 2);
        assert_eq!(m.tasks()[0].target, Some(TargetRef::Region(Region::new(0.0, 0.0, 40.0, 20.0))));
        assert_eq!(m.tasks()[1].action, ActionKind::Dock);
    }

    #[test]
    fn collect_alias() {
        let m = parse_mission("mission m2 normal\nbeta collect object o7").unwrap();
        assert_eq!(
            m.tasks()[0],
            Task::new("beta", ActionKind::Manipulate, Some(TargetRef::Object { id: "o7".into() }))
        );
    }

    #[test]
    fn targetless_manipulate_is_arity_error() {
        assert!(matches!(
            parse_mission("mission m3 normal\nalpha manipulate"),
            Err(MissionError::Arity { line: 2, .. })
        ));
        assert!(matches!(
            parse_mission("mission m3 normal\nalpha dock station s1"),
            Err(MissionError::Arity { line: 2, .. })
        ));
        assert!(matches!(
            parse_mission("mission m3 normal\nalpha communicate class cube"),
            Err(MissionError::Arity { .. })
        ));
    }

    #[test]
    fn unknown_action_positioned() {
        assert_eq!(
            parse_mission("mission m normal\n  alpha fly region 0 0 1 1"),
            Err(MissionError::UnknownAction { line: 2, column: 9, word: "fly".into() })
        );
    }

    #[test]
    fn syntax_errors_are_positioned() {
        assert!(matches!(
            parse_mission("alpha survey"),
            Err(MissionError::Syntax { line: 1, column: 1, .. })
        ));
        assert!(matches!(
            parse_mission("mission m normal\nalpha survey region 0 0 -4 2"),
            Err(MissionError::Syntax { line: 2, column: 25, .. })
        ));
        assert!(matches!(
            parse_mission("mission m normal\nalpha observe object"),
            Err(MissionError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_mission("mission m urgent\nalpha dock"),
            Err(MissionError::Syntax { line: 1, column: 11, .. })
        ));
        assert!(matches!(
            parse_mission("mission m\n# nothing\n"),
            Err(MissionError::Syntax { line: 3, .. })
        ));
        assert!(matches!(parse_mission(""), Err(MissionError::Syntax { line: 1, .. })));
    }

    #[test]
    fn comments_and_whitespace() {
        let m = parse_mission("# header comment\n\n  mission   m4 # trailing\n\talpha   undock  \n").unwrap();
        assert_eq!(m.priority(), Priority::Normal);
        assert_eq!(m.render(), "mission m4 normal\nalpha undock\n");
    }

    #[test]
    fn region_renders_four_numerals() {
        let m = parse_mission("mission m normal\nalpha survey region 0.0 -2.50 40 20").unwrap();
        assert_eq!(m.render(), "mission m normal\nalpha survey region 0 -2.5 40 20\n");
    }

    #[test]
    fn fixtures_round_trip() {
        for text in [
            "mission m1 normal\nalpha survey region 0 0 40 20\nalpha dock",
            "mission m2 normal\nbeta collect object o7",
        ] {
            let m = parse_mission(text).unwrap();
            assert_eq!(parse_mission(&m.render()).unwrap(), m);
        }
    }

    #[test]
    fn empty_task_list_rejected() {
        assert!(Mission::new("m", Priority::Normal, vec![]).is_err());
    }

    #[test]
    fn priority_order() {
        assert!(Priority::Safety > Priority::Human);
        assert!(Priority::Human > Priority::Communication);
        assert!(Priority::Communication > Priority::Normal);
    }

    #[test]
    fn json_round_trip() {
        let m = parse_mission("mission m9 human\nbeta observe class cube\nbeta communicate robot alpha").unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: Mission = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}

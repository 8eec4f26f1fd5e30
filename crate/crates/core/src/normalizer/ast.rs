use std::fmt;

/// Functions with a fixed canonical spelling. Any other command survives as an
/// opaque function named after the command.
pub const CANONICAL_FUNCTIONS: [&str; 4] = ["root", "frac", "pow", "sub"];

/// Wrappers that only affect rendering; none survive `rewrite_ast`.
pub const PRESENTATION_COMMANDS: &[&str] = &[
    "mathrm", "mathit", "mathbf", "mathsf", "mathtt", "mathnormal", "boldsymbol", "bm",
    "text", "textrm", "textit", "textbf", "textsf", "texttt", "textnormal", "mbox",
    "left", "right", "big", "Big", "bigg", "Bigg", "bigl", "bigr", "Bigl", "Bigr",
    "displaystyle", "textstyle", "scriptstyle", ",", ";", ":", "!", " ", "quad", "qquad",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Number,
    Symbol,
    Operator,
    Function,
    /// Payload is `""` for a plain sequence, `"("` or `"["` for a delimited one.
    Group,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MathAst {
    pub kind: NodeKind,
    pub payload: String,
    pub children: Vec<MathAst>,
}

impl MathAst {
    pub fn number(s: impl Into<String>) -> Self {
        Self::leaf(NodeKind::Number, s)
    }

    pub fn symbol(s: impl Into<String>) -> Self {
        Self::leaf(NodeKind::Symbol, s)
    }

    pub fn operator(s: impl Into<String>) -> Self {
        Self::leaf(NodeKind::Operator, s)
    }

    pub fn function(name: impl Into<String>, args: Vec<MathAst>) -> Self {
        MathAst {
            kind: NodeKind::Function,
            payload: name.into(),
            children: args,
        }
    }

    pub fn group(delim: &str, children: Vec<MathAst>) -> Self {
        MathAst {
            kind: NodeKind::Group,
            payload: delim.to_string(),
            children,
        }
    }

    /// A plain sequence, collapsed to its only element when it has one.
    pub fn sequence(mut children: Vec<MathAst>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Self::group("", children)
        }
    }

    fn leaf(kind: NodeKind, s: impl Into<String>) -> Self {
        MathAst {
            kind,
            payload: s.into(),
            children: Vec::new(),
        }
    }

    pub fn is_plain_group(&self) -> bool {
        self.kind == NodeKind::Group && self.payload.is_empty()
    }

    pub fn is_operator(&self, op: &str) -> bool {
        self.kind == NodeKind::Operator && self.payload == op
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(MathAst::depth).max().unwrap_or(0)
    }

    /// True when no presentation wrapper remains anywhere in the tree.
    pub fn is_presentation_free(&self) -> bool {
        !(self.kind == NodeKind::Function && PRESENTATION_COMMANDS.contains(&self.payload.as_str()))
            && self.children.iter().all(MathAst::is_presentation_free)
    }
}

/// Prefix-function serialization: `root(2x+y-5,3x-10)`. No whitespace, ASCII
/// commas between arguments, juxtaposition kept as concatenation.
pub fn serialize_canonical(ast: &MathAst) -> String {
    let mut out = String::new();
    write_node(ast, &mut out);
    out
}

fn write_node(node: &MathAst, out: &mut String) {
    match node.kind {
        NodeKind::Number | NodeKind::Symbol | NodeKind::Operator => out.push_str(&node.payload),
        NodeKind::Group => {
            let close = match node.payload.as_str() {
                "(" => ")",
                "[" => "]",
                _ => "",
            };
            out.push_str(&node.payload);
            for c in &node.children {
                write_node(c, out);
            }
            out.push_str(close);
        }
        NodeKind::Function => {
            out.push_str(&node.payload);
            if !node.children.is_empty() {
                out.push('(');
                for (i, c) in node.children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_node(c, out);
                }
                out.push(')');
            }
        }
    }
}

impl fmt::Display for MathAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_canonical(self))
    }
}

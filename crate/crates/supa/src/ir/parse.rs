use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::cfg::{BlockGraph, Dominators};
use super::{AllocKind, Block, Callee, Diagnostic, Diagnostics, Function, Global, Instr, Op, Program};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    Sym(String),
    Ident(String),
    Int(i64),
    Punct(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-'
}

fn lex(line: &str, lineno: usize) -> Result<Vec<Spanned>, Diagnostic> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == ';' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Spanned { tok: Tok::Arrow, col });
            i += 2;
            continue;
        }
        if "()[],=:{}".contains(c) {
            out.push(Spanned { tok: Tok::Punct(c), col });
            i += 1;
            continue;
        }
        let sigil = if c == '%' || c == '@' { Some(c) } else { None };
        let start = if sigil.is_some() { i + 1 } else { i };
        let mut j = start;
        while j < chars.len() && is_name_char(chars[j]) {
            j += 1;
        }
        if j == start {
            return Err(Diagnostic {
                line: lineno,
                col,
                rule: "syntax",
                message: format!("unexpected character '{c}'"),
            });
        }
        let word: String = chars[start..j].iter().collect();
        let tok = match sigil {
            Some('%') => Tok::Var(word),
            Some(_) => Tok::Sym(word),
            None => match word.parse::<i64>() {
                Ok(n) => Tok::Int(n),
                Err(_) => Tok::Ident(word),
            },
        };
        out.push(Spanned { tok, col });
        i = j;
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> Cursor<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.col).unwrap_or(self.line_len + 1)
    }

    fn err(&self, rule: &'static str, message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: self.line, col: self.col(), rule, message: message.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn punct(&mut self, c: char) -> Result<(), Diagnostic> {
        match self.peek() {
            Some(Tok::Punct(p)) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("syntax", format!("expected '{c}'"))),
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(p)) if *p == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn var(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("syntax", "expected %variable")),
        }
    }

    fn sym(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Sym(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("syntax", "expected @symbol")),
        }
    }

    fn ident(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            Some(Tok::Int(n)) => {
                let v = n.to_string();
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("syntax", "expected identifier")),
        }
    }

    fn end(&self) -> Result<(), Diagnostic> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("syntax", "unexpected trailing tokens"))
        }
    }
}

#[derive(Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

struct RawFunction {
    func: Function,
    line: usize,
    explicit_entry: bool,
}

/// Source positions of labels, used for diagnostics after parsing.
#[derive(Default)]
struct Spans {
    labels: HashMap<String, Pos>,
}

impl Spans {
    fn at(&self, label: &str) -> Pos {
        self.labels.get(label).copied().unwrap_or(Pos { line: 0, col: 0 })
    }
}

fn diag(pos: Pos, rule: &'static str, message: impl Into<String>) -> Diagnostic {
    Diagnostic { line: pos.line, col: pos.col, rule, message: message.into() }
}

/// Splits a line into statements so that `func @f() { bb0: l1: ret }` also
/// parses: breaks after `{`, before `}`, and after a block label that is
/// followed by an instruction label.
fn statements(toks: &[Spanned]) -> Vec<&[Spanned]> {
    let is = |i: usize, c: char| matches!(toks.get(i), Some(Spanned { tok: Tok::Punct(p), .. }) if *p == c);
    let label = |i: usize| matches!(toks.get(i).map(|t| &t.tok), Some(Tok::Ident(_) | Tok::Int(_))) && is(i + 1, ':');
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < toks.len() {
        if is(i, '{') {
            out.push(&toks[start..=i]);
            start = i + 1;
        } else if is(i, '}') && i > start {
            out.push(&toks[start..i]);
            start = i;
        } else if i == start && label(i) && label(i + 2) {
            out.push(&toks[start..i + 2]);
            start = i + 2;
            i += 1;
        }
        i += 1;
    }
    if start < toks.len() {
        out.push(&toks[start..]);
    }
    out
}

/// Parse and validate a `.svfir` program.
pub fn parse_program(text: &str) -> Result<Program, Diagnostics> {
    let mut diags = Vec::new();
    let mut globals: Vec<(Global, Option<String>, Pos)> = Vec::new();
    let mut funcs: Vec<RawFunction> = Vec::new();
    let mut spans = Spans::default();
    let mut current: Option<RawFunction> = None;

    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let toks = match lex(raw, lineno) {
            Ok(t) => t,
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        for seg in statements(&toks) {
            let mut cur = Cursor { toks: seg, pos: 0, line: lineno, line_len: raw.len() };
            if let Err(d) = parse_line(&mut cur, &mut current, &mut funcs, &mut globals, &mut spans) {
                diags.push(d);
                break;
            }
        }
    }
    if let Some(f) = current.take() {
        diags.push(Diagnostic {
            line: f.line,
            col: 1,
            rule: "syntax",
            message: format!("function @{} is not closed", f.func.name),
        });
    }
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }

    let mut program = Program { globals: globals.iter().map(|(g, _, _)| g.clone()).collect(), functions: Vec::new() };
    for rf in funcs.iter_mut() {
        if !rf.explicit_entry {
            rf.func.entry_label = format!("{}.entry", rf.func.name);
        }
        expand_gep_any(&mut rf.func, &mut spans);
    }
    program.functions = funcs.into_iter().map(|rf| rf.func).collect();

    lower_global_inits(&mut program, &globals, &mut spans, &mut diags);
    if diags.is_empty() {
        validate(&program, &spans, &mut diags);
    }
    if diags.is_empty() {
        Ok(program)
    } else {
        diags.sort_by_key(|d| (d.line, d.col));
        Err(Diagnostics(diags))
    }
}

fn parse_line(
    cur: &mut Cursor,
    current: &mut Option<RawFunction>,
    funcs: &mut Vec<RawFunction>,
    globals: &mut Vec<(Global, Option<String>, Pos)>,
    spans: &mut Spans,
) -> Result<(), Diagnostic> {
    let first_col = cur.col();
    match cur.peek().cloned() {
        Some(Tok::Ident(kw)) if kw == "global" && current.is_none() => {
            cur.next();
            let name = cur.sym()?;
            let init = if matches!(cur.peek(), Some(Tok::Arrow)) {
                cur.next();
                Some(cur.sym()?)
            } else {
                None
            };
            cur.end()?;
            globals.push((Global { name }, init, Pos { line: cur.line, col: first_col }));
            Ok(())
        }
        Some(Tok::Ident(kw)) if kw == "func" && current.is_none() => {
            cur.next();
            let name = cur.sym()?;
            cur.punct('(')?;
            let mut params = Vec::new();
            if !cur.eat_punct(')') {
                loop {
                    params.push(cur.var()?);
                    if cur.eat_punct(')') {
                        break;
                    }
                    cur.punct(',')?;
                }
            }
            cur.punct('{')?;
            cur.end()?;
            *current = Some(RawFunction {
                func: Function { name, params, entry_label: String::new(), blocks: Vec::new() },
                line: cur.line,
                explicit_entry: false,
            });
            Ok(())
        }
        Some(Tok::Punct('}')) => {
            cur.next();
            cur.end()?;
            match current.take() {
                Some(f) => {
                    funcs.push(f);
                    Ok(())
                }
                None => Err(cur.err("syntax", "unmatched '}'")),
            }
        }
        Some(Tok::Ident(_)) | Some(Tok::Int(_)) => {
            let Some(rf) = current.as_mut() else {
                return Err(cur.err("syntax", "statement outside of a function"));
            };
            let name = cur.ident()?;
            cur.punct(':')?;
            if cur.at_end() {
                rf.func.blocks.push(Block { name, instrs: Vec::new() });
                return Ok(());
            }
            let pos = Pos { line: cur.line, col: first_col };
            if matches!(cur.peek(), Some(Tok::Ident(k)) if k == "entry") {
                cur.next();
                cur.end()?;
                let first_block_empty = rf.func.blocks.len() == 1 && rf.func.blocks[0].instrs.is_empty();
                if !first_block_empty || rf.explicit_entry {
                    return Err(diag(pos, "entry", "`entry` must be the first line of the first block"));
                }
                rf.explicit_entry = true;
                rf.func.entry_label = name.clone();
                spans.labels.insert(name, pos);
                return Ok(());
            }
            let op = parse_op(cur)?;
            cur.end()?;
            let Some(block) = rf.func.blocks.last_mut() else {
                return Err(diag(pos, "syntax", "instruction before first block label"));
            };
            if spans.labels.contains_key(&name) {
                return Err(diag(pos, "label", format!("duplicate label {name}")));
            }
            spans.labels.insert(name.clone(), pos);
            block.instrs.push(Instr { label: name, op });
            Ok(())
        }
        _ => Err(cur.err("syntax", "unrecognized line")),
    }
}

fn parse_alloc(cur: &mut Cursor, dst: String, kind: AllocKind) -> Result<Op, Diagnostic> {
    let mut name = None;
    let mut array = false;
    if let Some(Tok::Ident(_)) = cur.peek() {
        name = Some(cur.ident()?);
    }
    if cur.eat_punct('[') {
        let attr = cur.ident()?;
        if attr != "array" {
            return Err(cur.err("syntax", format!("unknown attribute {attr}")));
        }
        cur.punct(']')?;
        array = true;
    }
    Ok(Op::Alloc { dst, kind, name, array })
}

fn parse_call(cur: &mut Cursor, dst: Option<String>) -> Result<Op, Diagnostic> {
    let callee = match cur.peek() {
        Some(Tok::Sym(_)) => Callee::Direct(cur.sym()?),
        Some(Tok::Var(_)) => Callee::Indirect(cur.var()?),
        _ => return Err(cur.err("syntax", "expected callee")),
    };
    cur.punct('(')?;
    let mut args = Vec::new();
    if !cur.eat_punct(')') {
        loop {
            args.push(cur.var()?);
            if cur.eat_punct(')') {
                break;
            }
            cur.punct(',')?;
        }
    }
    Ok(Op::Call { dst, callee, args })
}

fn field_index(cur: &mut Cursor) -> Result<u32, Diagnostic> {
    match cur.peek() {
        Some(Tok::Int(n)) if *n >= 0 && *n <= u32::MAX as i64 => {
            let n = *n as u32;
            cur.next();
            Ok(n)
        }
        _ => Err(cur.err("field", "non-constant field offset")),
    }
}

fn parse_op(cur: &mut Cursor) -> Result<Op, Diagnostic> {
    match cur.peek().cloned() {
        Some(Tok::Var(dst)) => {
            cur.next();
            cur.punct('=')?;
            let kw = cur.ident()?;
            match kw.as_str() {
                "alloca" => parse_alloc(cur, dst, AllocKind::Stack),
                "heap" => parse_alloc(cur, dst, AllocKind::Heap),
                "heap0" => parse_alloc(cur, dst, AllocKind::Heap0),
                "uao" => {
                    let name = cur.ident()?;
                    Ok(Op::Alloc { dst, kind: AllocKind::Uao, name: Some(name), array: false })
                }
                "addr" => Ok(Op::Addr { dst, symbol: cur.sym()? }),
                "copy" => Ok(Op::Copy { dst, src: cur.var()? }),
                "load" => Ok(Op::Load { dst, ptr: cur.var()? }),
                "field" => {
                    let src = cur.var()?;
                    cur.punct(',')?;
                    let index = field_index(cur)?;
                    Ok(Op::Field { dst, src, index })
                }
                "gep-any" => {
                    let src = cur.var()?;
                    cur.punct(',')?;
                    let count = field_index(cur)?;
                    if count == 0 {
                        return Err(cur.err("field", "gep-any needs at least one field"));
                    }
                    // Placeholder; expanded into one field access per index.
                    Ok(Op::Phi { dst, incoming: vec![(src, format!("#gep-any:{count}"))] })
                }
                "phi" => {
                    let mut incoming = Vec::new();
                    loop {
                        cur.punct('[')?;
                        let v = cur.var()?;
                        cur.punct(',')?;
                        let b = cur.ident()?;
                        cur.punct(']')?;
                        incoming.push((v, b));
                        if !cur.eat_punct(',') {
                            break;
                        }
                    }
                    Ok(Op::Phi { dst, incoming })
                }
                "call" => parse_call(cur, Some(dst)),
                other => Err(cur.err("syntax", format!("unknown operation {other}"))),
            }
        }
        Some(Tok::Ident(kw)) => {
            cur.next();
            match kw.as_str() {
                "store" => {
                    let ptr = cur.var()?;
                    cur.punct(',')?;
                    let val = cur.var()?;
                    Ok(Op::Store { ptr, val })
                }
                "call" => parse_call(cur, None),
                "jmp" => Ok(Op::Br { targets: vec![cur.ident()?] }),
                "br" => {
                    let mut targets = vec![cur.ident()?];
                    while !cur.at_end() {
                        targets.push(cur.ident()?);
                    }
                    Ok(Op::Br { targets })
                }
                "ret" => {
                    let val = if cur.at_end() { None } else { Some(cur.var()?) };
                    Ok(Op::Ret { val })
                }
                other => Err(cur.err("syntax", format!("unknown operation {other}"))),
            }
        }
        _ => Err(cur.err("syntax", "expected instruction")),
    }
}

fn gep_any_count(op: &Op) -> Option<(String, String, u32)> {
    if let Op::Phi { dst, incoming } = op {
        if incoming.len() == 1 {
            if let Some(n) = incoming[0].1.strip_prefix("#gep-any:") {
                return Some((dst.clone(), incoming[0].0.clone(), n.parse().ok()?));
            }
        }
    }
    None
}

/// Expand `%p = gep-any %q, N` into a branch over N constant field
/// accesses joined by a phi.
fn expand_gep_any(func: &mut Function, spans: &mut Spans) {
    loop {
        let mut found = None;
        for (bi, b) in func.blocks.iter().enumerate() {
            for (ii, ins) in b.instrs.iter().enumerate() {
                if gep_any_count(&ins.op).is_some() {
                    found = Some((bi, ii));
                }
            }
        }
        let Some((bi, ii)) = found else { return };
        let ins = func.blocks[bi].instrs[ii].clone();
        let (dst, src, count) = gep_any_count(&ins.op).unwrap();
        let pos = spans.at(&ins.label);
        let l = &ins.label;
        let tail: Vec<Instr> = func.blocks[bi].instrs.drain(ii..).skip(1).collect();
        let old_name = func.blocks[bi].name.clone();
        let join_name = format!("{old_name}.{l}.join");
        let mut new_blocks = Vec::new();
        let mut incoming = Vec::new();
        let mut targets = Vec::new();
        for k in 0..count {
            let bname = format!("{old_name}.{l}.f{k}");
            let tmp = format!("{dst}.{k}");
            let fl = format!("{l}.f{k}");
            let jl = format!("{l}.f{k}.jmp");
            spans.labels.insert(fl.clone(), pos);
            spans.labels.insert(jl.clone(), pos);
            new_blocks.push(Block {
                name: bname.clone(),
                instrs: vec![
                    Instr { label: fl, op: Op::Field { dst: tmp.clone(), src: src.clone(), index: k } },
                    Instr { label: jl, op: Op::Br { targets: vec![join_name.clone()] } },
                ],
            });
            incoming.push((tmp, bname.clone()));
            targets.push(bname);
        }
        let br_label = format!("{l}.br");
        spans.labels.insert(br_label.clone(), pos);
        func.blocks[bi].instrs.push(Instr { label: br_label, op: Op::Br { targets } });
        let mut join_instrs = vec![Instr { label: ins.label.clone(), op: Op::Phi { dst, incoming } }];
        join_instrs.extend(tail);
        // Successors of the split block now see the join block as predecessor.
        let succs: Vec<String> = match join_instrs.last().map(|i| &i.op) {
            Some(Op::Br { targets }) => targets.clone(),
            _ => vec![],
        };
        for b in func.blocks.iter_mut() {
            if !succs.contains(&b.name) {
                continue;
            }
            for i in b.instrs.iter_mut() {
                if let Op::Phi { incoming, .. } = &mut i.op {
                    for (_, pred) in incoming.iter_mut() {
                        if *pred == old_name {
                            *pred = join_name.clone();
                        }
                    }
                }
            }
        }
        new_blocks.push(Block { name: join_name, instrs: join_instrs });
        let at = bi + 1;
        for (k, b) in new_blocks.into_iter().enumerate() {
            func.blocks.insert(at + k, b);
        }
    }
}

fn fresh_label(base: &str, taken: &HashSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..).map(|k| format!("{base}.{k}")).find(|c| !taken.contains(c)).unwrap()
}

fn lower_global_inits(
    program: &mut Program,
    globals: &[(Global, Option<String>, Pos)],
    spans: &mut Spans,
    diags: &mut Vec<Diagnostic>,
) {
    let inits: Vec<_> = globals.iter().filter(|(_, init, _)| init.is_some()).collect();
    if inits.is_empty() {
        return;
    }
    let Some(mi) = program.main_index() else {
        let (_, _, pos) = inits[0];
        diags.push(diag(*pos, "global", "global initializer without an entry function"));
        return;
    };
    let mut taken: HashSet<String> = spans.labels.keys().cloned().collect();
    for f in &program.functions {
        taken.insert(f.entry_label.clone());
    }
    let mut lowered = Vec::new();
    for (g, init, pos) in inits {
        let target = init.clone().unwrap();
        let dst_var = format!("{}.init.ptr", g.name);
        let val_var = format!("{}.init.val", g.name);
        for (suffix, op) in [
            ("ptr", Op::Addr { dst: dst_var.clone(), symbol: g.name.clone() }),
            ("val", Op::Addr { dst: val_var.clone(), symbol: target.clone() }),
            ("st", Op::Store { ptr: dst_var.clone(), val: val_var.clone() }),
        ] {
            let label = fresh_label(&format!("{}.init.{suffix}", g.name), &taken);
            taken.insert(label.clone());
            spans.labels.insert(label.clone(), *pos);
            lowered.push(Instr { label, op });
        }
    }
    let main = &mut program.functions[mi];
    if let Some(b) = main.blocks.first_mut() {
        let rest = std::mem::take(&mut b.instrs);
        b.instrs = lowered;
        b.instrs.extend(rest);
    }
}

fn validate(program: &Program, spans: &Spans, diags: &mut Vec<Diagnostic>) {
    let mut labels: HashSet<&str> = HashSet::new();
    let mut symbols: HashSet<&str> = HashSet::new();
    let mut object_names: HashMap<&str, &str> = HashMap::new();
    for g in &program.globals {
        if !symbols.insert(&g.name) {
            diags.push(diag(Pos { line: 0, col: 0 }, "name", format!("duplicate symbol @{}", g.name)));
        }
        object_names.insert(&g.name, "global");
    }
    for f in &program.functions {
        if !symbols.insert(&f.name) {
            diags.push(diag(Pos { line: 0, col: 0 }, "name", format!("duplicate symbol @{}", f.name)));
        }
    }
    for f in &program.functions {
        if !labels.insert(&f.entry_label) {
            diags.push(diag(spans.at(&f.entry_label), "label", format!("duplicate label {}", f.entry_label)));
        }
        for ins in f.instrs() {
            if !labels.insert(&ins.label) {
                diags.push(diag(spans.at(&ins.label), "label", format!("duplicate label {}", ins.label)));
            }
            if let Op::Alloc { kind, name, .. } = &ins.op {
                let oname = name.as_deref().unwrap_or(&ins.label);
                if *kind != AllocKind::Uao && object_names.insert(oname, "alloc").is_some() {
                    diags.push(diag(spans.at(&ins.label), "name", format!("duplicate object name {oname}")));
                }
            }
        }
    }
    for f in &program.functions {
        validate_function(program, f, &symbols, spans, diags);
    }
}

fn validate_function(
    program: &Program,
    f: &Function,
    symbols: &HashSet<&str>,
    spans: &Spans,
    diags: &mut Vec<Diagnostic>,
) {
    let fpos =
        f.blocks.first().and_then(|b| b.instrs.first()).map(|i| spans.at(&i.label)).unwrap_or(Pos { line: 0, col: 0 });
    if f.blocks.is_empty() {
        diags.push(diag(fpos, "funexit", format!("missing FunExit in @{}", f.name)));
        return;
    }
    let mut names = HashSet::new();
    for b in &f.blocks {
        if !names.insert(b.name.as_str()) {
            diags.push(diag(fpos, "block", format!("duplicate block {} in @{}", b.name, f.name)));
        }
    }
    let mut rets = 0;
    for b in &f.blocks {
        let n = b.instrs.len();
        if n == 0 {
            diags.push(diag(fpos, "block", format!("empty block {} in @{}", b.name, f.name)));
            continue;
        }
        for (i, ins) in b.instrs.iter().enumerate() {
            let pos = spans.at(&ins.label);
            if matches!(ins.op, Op::Ret { .. }) {
                rets += 1;
                if rets > 1 {
                    diags.push(diag(pos, "funexit", format!("second FunExit at {}", ins.label)));
                }
            }
            if ins.op.is_terminator() != (i == n - 1) {
                let msg = if i == n - 1 {
                    format!("block {} does not end with a terminator", b.name)
                } else {
                    format!("terminator {} in the middle of block {}", ins.label, b.name)
                };
                diags.push(diag(pos, "block", msg));
            }
            if let Op::Br { targets } = &ins.op {
                for t in targets {
                    if f.block_index(t).is_none() {
                        diags.push(diag(pos, "name", format!("unresolvable name {t} at {}", ins.label)));
                    }
                }
            }
            match &ins.op {
                Op::Addr { symbol, .. } | Op::Call { callee: Callee::Direct(symbol), .. }
                    if !symbols.contains(symbol.as_str()) =>
                {
                    diags.push(diag(pos, "name", format!("unresolvable name @{symbol} at {}", ins.label)));
                }
                Op::Call { callee: Callee::Direct(symbol), .. } if program.function(symbol).is_none() => {
                    diags.push(diag(pos, "name", format!("@{symbol} is not a function at {}", ins.label)));
                }
                _ => {}
            }
        }
    }
    if rets == 0 {
        diags.push(diag(fpos, "funexit", format!("missing FunExit in @{}", f.name)));
    }
    if !diags.is_empty() {
        return;
    }

    let graph = BlockGraph::new(f);
    let unreachable: Vec<usize> = (0..f.blocks.len()).filter(|&b| !graph.reachable[b]).collect();
    for b in unreachable {
        let pos = spans.at(&f.blocks[b].instrs[0].label);
        diags.push(diag(pos, "cfg", format!("unreachable block {} in @{}", f.blocks[b].name, f.name)));
    }
    if !diags.is_empty() {
        return;
    }

    // Phi placement and predecessor agreement.
    for (bi, b) in f.blocks.iter().enumerate() {
        let mut head = true;
        for ins in &b.instrs {
            let pos = spans.at(&ins.label);
            if let Op::Phi { incoming, .. } = &ins.op {
                if !head {
                    diags.push(diag(pos, "phi", format!("phi {} is not at the block head", ins.label)));
                }
                let preds: BTreeSet<&str> = graph.preds[bi].iter().map(|&p| f.blocks[p].name.as_str()).collect();
                let given: Vec<&str> = incoming.iter().map(|(_, b)| b.as_str()).collect();
                let given_set: BTreeSet<&str> = given.iter().copied().collect();
                if given.len() != given_set.len() || given_set != preds {
                    diags.push(diag(
                        pos,
                        "phi",
                        format!(
                            "phi predecessor mismatch at {}: expected [{}]",
                            ins.label,
                            preds.into_iter().collect::<Vec<_>>().join(", ")
                        ),
                    ));
                }
            } else {
                head = false;
            }
        }
    }

    // Single static assignment.
    let mut defs: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in &f.params {
        if defs.insert(p, (usize::MAX, 0)).is_some() {
            diags.push(diag(fpos, "ssa", format!("SSA violation at {}", f.entry_label)));
        }
    }
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, ins) in b.instrs.iter().enumerate() {
            if let Some(d) = ins.op.def() {
                if defs.insert(d, (bi, ii)).is_some() {
                    diags.push(diag(spans.at(&ins.label), "ssa", format!("SSA violation at {}", ins.label)));
                }
            }
        }
    }
    if !diags.is_empty() {
        return;
    }

    // Every use is defined and dominated by its def.
    let dom = Dominators::new(&graph);
    let dominates = |def: (usize, usize), use_block: usize, use_idx: usize| -> bool {
        if def.0 == usize::MAX {
            return true;
        }
        if def.0 == use_block {
            def.1 < use_idx
        } else {
            dom.dominates(def.0, use_block)
        }
    };
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, ins) in b.instrs.iter().enumerate() {
            let pos = spans.at(&ins.label);
            if let Op::Phi { incoming, .. } = &ins.op {
                for (v, pred) in incoming {
                    match defs.get(v.as_str()) {
                        None => diags.push(diag(pos, "name", format!("unresolvable name %{v} at {}", ins.label))),
                        Some(&d) => {
                            let pb = f.block_index(pred).unwrap();
                            if !dominates(d, pb, usize::MAX) {
                                diags.push(diag(
                                    pos,
                                    "dominance",
                                    format!("def of %{v} does not dominate its use at {}", ins.label),
                                ));
                            }
                        }
                    }
                }
                continue;
            }
            for v in ins.op.uses() {
                match defs.get(v) {
                    None => diags.push(diag(pos, "name", format!("unresolvable name %{v} at {}", ins.label))),
                    Some(&d) => {
                        if !dominates(d, bi, ii) {
                            diags.push(diag(
                                pos,
                                "dominance",
                                format!("def of %{v} does not dominate its use at {}", ins.label),
                            ));
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(line: &str) -> Vec<usize> {
        let toks = lex(line, 1).unwrap();
        statements(&toks).iter().map(|s| s.len()).collect()
    }

    #[test]
    fn one_line_function_splits_into_statements() {
        // func @f ( ) {  |  bb0 :  |  l1 : ret  |  }
        assert_eq!(split("func @f() { bb0: l1: ret }"), [5, 2, 3, 1]);
        assert_eq!(split("  l1: %p = alloca a"), [6]);
        assert_eq!(split("bb1:"), [2]);
    }

    #[test]
    fn lexer_reports_column() {
        let d = lex("  l1: %p = $", 3).unwrap_err();
        assert_eq!((d.line, d.col), (3, 12));
    }
}

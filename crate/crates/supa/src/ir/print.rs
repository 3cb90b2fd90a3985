use std::fmt::Write;

use super::{AllocKind, Callee, Op, Program};

/// Render one instruction's right-hand side in `.svfir` syntax.
pub fn format_op(op: &Op) -> String {
    let args = |a: &[String]| a.iter().map(|v| format!("%{v}")).collect::<Vec<_>>().join(", ");
    let callee = |c: &Callee| match c {
        Callee::Direct(f) => format!("@{f}"),
        Callee::Indirect(v) => format!("%{v}"),
    };
    match op {
        Op::Alloc { dst, kind, name, array } => {
            let kw = match kind {
                AllocKind::Stack => "alloca",
                AllocKind::Heap => "heap",
                AllocKind::Heap0 => "heap0",
                AllocKind::Uao => "uao",
            };
            let mut s = format!("%{dst} = {kw}");
            if let Some(n) = name {
                s.push(' ');
                s.push_str(n);
            }
            if *array {
                s.push_str(" [array]");
            }
            s
        }
        Op::Addr { dst, symbol } => format!("%{dst} = addr @{symbol}"),
        Op::Copy { dst, src } => format!("%{dst} = copy %{src}"),
        Op::Phi { dst, incoming } => {
            let parts: Vec<String> = incoming.iter().map(|(v, b)| format!("[%{v}, {b}]")).collect();
            format!("%{dst} = phi {}", parts.join(", "))
        }
        Op::Field { dst, src, index } => format!("%{dst} = field %{src}, {index}"),
        Op::Load { dst, ptr } => format!("%{dst} = load %{ptr}"),
        Op::Store { ptr, val } => format!("store %{ptr}, %{val}"),
        Op::Call { dst, callee: c, args: a } => match dst {
            Some(d) => format!("%{d} = call {}({})", callee(c), args(a)),
            None => format!("call {}({})", callee(c), args(a)),
        },
        Op::Br { targets } if targets.len() == 1 => format!("jmp {}", targets[0]),
        Op::Br { targets } => format!("br {}", targets.join(" ")),
        Op::Ret { val: Some(v) } => format!("ret %{v}"),
        Op::Ret { val: None } => "ret".to_string(),
    }
}

/// Print a program in `.svfir` syntax. Parsing the output yields an
/// equal [`Program`].
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for g in &program.globals {
        let _ = writeln!(out, "global @{}", g.name);
    }
    for f in &program.functions {
        if !out.is_empty() {
            out.push('\n');
        }
        let params: Vec<String> = f.params.iter().map(|p| format!("%{p}")).collect();
        let _ = writeln!(out, "func @{}({}) {{", f.name, params.join(", "));
        for (bi, b) in f.blocks.iter().enumerate() {
            let _ = writeln!(out, "{}:", b.name);
            if bi == 0 {
                let _ = writeln!(out, "  {}: entry", f.entry_label);
            }
            for ins in &b.instrs {
                let _ = writeln!(out, "  {}: {}", ins.label, format_op(&ins.op));
            }
        }
        out.push_str("}\n");
    }
    out
}

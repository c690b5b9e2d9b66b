use std::fmt;

use super::types::Ty;

/// An instruction operand.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    /// `%name`: an instruction result or a function parameter.
    Value(String),
    /// `@name`: a global variable or a function address.
    Global(String),
    Int(i64),
    Null,
}

impl Operand {
    pub fn value(name: impl Into<String>) -> Self {
        Operand::Value(name.into())
    }

    pub fn as_value(&self) -> Option<&str> {
        match self {
            Operand::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Value(v) => write!(f, "%{v}"),
            Operand::Global(g) => write!(f, "@{g}"),
            Operand::Int(i) => write!(f, "{i}"),
            Operand::Null => f.write_str("null"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub const ALL: [BinOp; 6] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.mnemonic() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpPred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl CmpPred {
    pub const ALL: [CmpPred; 6] = [
        CmpPred::Eq,
        CmpPred::Ne,
        CmpPred::Slt,
        CmpPred::Sle,
        CmpPred::Sgt,
        CmpPred::Sge,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            CmpPred::Eq => "eq",
            CmpPred::Ne => "ne",
            CmpPred::Slt => "slt",
            CmpPred::Sle => "sle",
            CmpPred::Sgt => "sgt",
            CmpPred::Sge => "sge",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.mnemonic() == s)
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpPred::Eq => a == b,
            CmpPred::Ne => a != b,
            CmpPred::Slt => a < b,
            CmpPred::Sle => a <= b,
            CmpPred::Sgt => a > b,
            CmpPred::Sge => a >= b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallArg {
    pub value: Operand,
    pub writeonly: bool,
}

impl CallArg {
    pub fn plain(value: Operand) -> Self {
        CallArg {
            value,
            writeonly: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Alloca(Ty),
    Load {
        ty: Ty,
        addr: Operand,
    },
    Store {
        ty: Ty,
        value: Operand,
        addr: Operand,
    },
    /// Address of a (possibly nested) field of the aggregate `agg` at `base`.
    FieldAddr {
        agg: String,
        base: Operand,
        path: Vec<String>,
    },
    Call {
        ret: Ty,
        callee: String,
        args: Vec<CallArg>,
    },
    Br(String),
    CondBr {
        cond: Operand,
        then_to: String,
        else_to: String,
    },
    Switch {
        ty: Ty,
        value: Operand,
        default: String,
        cases: Vec<(i64, String)>,
    },
    Phi {
        ty: Ty,
        incoming: Vec<(String, Operand)>,
    },
    Ret(Option<(Ty, Operand)>),
    Bin {
        op: BinOp,
        ty: Ty,
        lhs: Operand,
        rhs: Operand,
    },
    Cmp {
        pred: CmpPred,
        ty: Ty,
        lhs: Operand,
        rhs: Operand,
    },
    Cast {
        value: Operand,
        to: Ty,
    },
    Nondet(Ty),
    Assert(Operand),
    Assume(Operand),
    RcInc {
        class: String,
        obj: Operand,
    },
    RcDec {
        class: String,
        obj: Operand,
    },
    /// Reads the aggregate ledger delta of a refcount class (an `i64`).
    RcDelta {
        class: String,
    },
    /// Inline assembly placeholder.
    Asm {
        mnemonic: String,
        ty: Ty,
        args: Vec<Operand>,
    },
}

/// Coarse instruction kind, used for statistics and structural comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Alloca,
    Load,
    Store,
    FieldAddr,
    Call,
    Br,
    CondBr,
    Switch,
    Phi,
    Ret,
    Bin,
    Cmp,
    Cast,
    Nondet,
    Assert,
    Assume,
    RcInc,
    RcDec,
    RcDelta,
    Asm,
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Alloca(_) => OpKind::Alloca,
            Op::Load { .. } => OpKind::Load,
            Op::Store { .. } => OpKind::Store,
            Op::FieldAddr { .. } => OpKind::FieldAddr,
            Op::Call { .. } => OpKind::Call,
            Op::Br(_) => OpKind::Br,
            Op::CondBr { .. } => OpKind::CondBr,
            Op::Switch { .. } => OpKind::Switch,
            Op::Phi { .. } => OpKind::Phi,
            Op::Ret(_) => OpKind::Ret,
            Op::Bin { .. } => OpKind::Bin,
            Op::Cmp { .. } => OpKind::Cmp,
            Op::Cast { .. } => OpKind::Cast,
            Op::Nondet(_) => OpKind::Nondet,
            Op::Assert(_) => OpKind::Assert,
            Op::Assume(_) => OpKind::Assume,
            Op::RcInc { .. } => OpKind::RcInc,
            Op::RcDec { .. } => OpKind::RcDec,
            Op::RcDelta { .. } => OpKind::RcDelta,
            Op::Asm { .. } => OpKind::Asm,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Op::Br(_) | Op::CondBr { .. } | Op::Switch { .. } | Op::Ret(_)
        )
    }

    /// Instructions that only compute a value from their operands.
    pub fn is_pure(&self) -> bool {
        matches!(
            self,
            Op::Bin { .. }
                | Op::Cmp { .. }
                | Op::Cast { .. }
                | Op::FieldAddr { .. }
                | Op::Nondet(_)
                | Op::Asm { .. }
        )
    }

    /// Control-flow successors, in declaration order (duplicates kept).
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Op::Br(t) => vec![t.as_str()],
            Op::CondBr {
                then_to, else_to, ..
            } => vec![then_to.as_str(), else_to.as_str()],
            Op::Switch { default, cases, .. } => {
                let mut v = vec![default.as_str()];
                v.extend(cases.iter().map(|(_, l)| l.as_str()));
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn successors_mut(&mut self) -> Vec<&mut String> {
        match self {
            Op::Br(t) => vec![t],
            Op::CondBr {
                then_to, else_to, ..
            } => vec![then_to, else_to],
            Op::Switch { default, cases, .. } => {
                let mut v = vec![default];
                v.extend(cases.iter_mut().map(|(_, l)| l));
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Op::Alloca(_) | Op::Br(_) | Op::Nondet(_) | Op::RcDelta { .. } | Op::Ret(None) => {
                Vec::new()
            }
            Op::Load { addr, .. } => vec![addr],
            Op::Store { value, addr, .. } => vec![value, addr],
            Op::FieldAddr { base, .. } => vec![base],
            Op::Call { args, .. } => args.iter().map(|a| &a.value).collect(),
            Op::CondBr { cond, .. } => vec![cond],
            Op::Switch { value, .. } => vec![value],
            Op::Phi { incoming, .. } => incoming.iter().map(|(_, v)| v).collect(),
            Op::Ret(Some((_, v))) => vec![v],
            Op::Bin { lhs, rhs, .. } | Op::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            Op::Cast { value, .. } => vec![value],
            Op::Assert(c) | Op::Assume(c) => vec![c],
            Op::RcInc { obj, .. } | Op::RcDec { obj, .. } => vec![obj],
            Op::Asm { args, .. } => args.iter().collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Op::Alloca(_) | Op::Br(_) | Op::Nondet(_) | Op::RcDelta { .. } | Op::Ret(None) => {
                Vec::new()
            }
            Op::Load { addr, .. } => vec![addr],
            Op::Store { value, addr, .. } => vec![value, addr],
            Op::FieldAddr { base, .. } => vec![base],
            Op::Call { args, .. } => args.iter_mut().map(|a| &mut a.value).collect(),
            Op::CondBr { cond, .. } => vec![cond],
            Op::Switch { value, .. } => vec![value],
            Op::Phi { incoming, .. } => incoming.iter_mut().map(|(_, v)| v).collect(),
            Op::Ret(Some((_, v))) => vec![v],
            Op::Bin { lhs, rhs, .. } | Op::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            Op::Cast { value, .. } => vec![value],
            Op::Assert(c) | Op::Assume(c) => vec![c],
            Op::RcInc { obj, .. } | Op::RcDec { obj, .. } => vec![obj],
            Op::Asm { args, .. } => args.iter_mut().collect(),
        }
    }

    /// Names of SSA values read by this instruction.
    pub fn used_values(&self) -> impl Iterator<Item = &str> {
        self.operands().into_iter().filter_map(Operand::as_value)
    }

    pub fn ref_class(&self) -> Option<&str> {
        match self {
            Op::RcInc { class, .. } | Op::RcDec { class, .. } | Op::RcDelta { class } => {
                Some(class)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inst {
    /// Result name (without the `%` sigil); `None` for void instructions.
    pub result: Option<String>,
    pub op: Op,
}

impl Inst {
    pub fn new(result: Option<String>, op: Op) -> Self {
        Inst { result, op }
    }

    pub fn void(op: Op) -> Self {
        Inst { result: None, op }
    }

    pub fn def(result: impl Into<String>, op: Op) -> Self {
        Inst {
            result: Some(result.into()),
            op,
        }
    }
}

/// Position of an instruction inside a function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstId {
    pub block: usize,
    pub index: usize,
}

impl InstId {
    pub fn new(block: usize, index: usize) -> Self {
        InstId { block, index }
    }
}

impl fmt::Display for InstId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}.{}", self.block, self.index)
    }
}

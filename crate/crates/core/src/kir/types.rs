use std::fmt;

/// A KIR type.
///
/// Aggregates are referenced by name; their layout lives in the module's
/// [`TypeDef`] table.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Int(u32),
    /// Address type; `None` is the opaque `ptr`.
    Ptr(Option<Box<Ty>>),
    Agg(String),
    /// The distinguished reference counter field type (`kref_t`).
    Kref,
    /// Opaque handle type used for results that may only be null-checked.
    Token,
    Void,
}

pub const DEFAULT_INT_WIDTH: u32 = 64;

impl Ty {
    pub fn ptr_to(ty: Ty) -> Ty {
        Ty::Ptr(Some(Box::new(ty)))
    }

    pub fn is_int(&self) -> bool {
        matches!(self, Ty::Int(_))
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, Ty::Ptr(_))
    }

    pub fn is_void(&self) -> bool {
        matches!(self, Ty::Void)
    }

    /// Scalars are the values that fit in an SSA register.
    pub fn is_scalar(&self) -> bool {
        matches!(self, Ty::Int(_) | Ty::Ptr(_))
    }

    pub fn pointee(&self) -> Option<&Ty> {
        match self {
            Ty::Ptr(Some(p)) => Some(p),
            _ => None,
        }
    }

    /// Name of the aggregate this address type points at, if any.
    pub fn pointee_agg(&self) -> Option<&str> {
        match self.pointee() {
            Some(Ty::Agg(name)) => Some(name),
            _ => None,
        }
    }

    /// Loose compatibility used by the checker: opaque pointers unify with
    /// every address type.
    pub fn compatible(&self, other: &Ty) -> bool {
        match (self, other) {
            (Ty::Ptr(None), Ty::Ptr(_)) | (Ty::Ptr(_), Ty::Ptr(None)) => true,
            (Ty::Ptr(Some(a)), Ty::Ptr(Some(b))) => a.compatible(b),
            _ => self == other,
        }
    }

    /// Whether the literal `value` is representable in this integer type
    /// (accepting both the signed and the unsigned reading).
    pub fn fits_literal(&self, value: i64) -> bool {
        match self {
            Ty::Int(w) if *w >= 64 => true,
            Ty::Int(1) => value == 0 || value == 1 || value == -1,
            Ty::Int(w) => {
                let min = -(1i128 << (w - 1));
                let max = (1i128 << w) - 1;
                (min..=max).contains(&(value as i128))
            }
            _ => false,
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int(w) => write!(f, "i{w}"),
            Ty::Ptr(None) => f.write_str("ptr"),
            Ty::Ptr(Some(inner)) => write!(f, "ptr<{inner}>"),
            Ty::Agg(name) => f.write_str(name),
            Ty::Kref => f.write_str("kref_t"),
            Ty::Token => f.write_str("token_t"),
            Ty::Void => f.write_str("void"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub ty: Ty,
}

/// Aggregate definition. `kref_path` names the field path that ends in the
/// embedded counter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDef {
    pub name: String,
    pub fields: Vec<Field>,
    pub kref_path: Option<Vec<String>>,
}

impl TypeDef {
    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_widths() {
        assert!(Ty::Int(8).fits_literal(255));
        assert!(Ty::Int(8).fits_literal(-128));
        assert!(!Ty::Int(8).fits_literal(256));
        assert!(!Ty::Int(8).fits_literal(-129));
        assert!(Ty::Int(1).fits_literal(1));
        assert!(!Ty::Int(1).fits_literal(2));
        assert!(Ty::Int(64).fits_literal(i64::MIN));
    }

    #[test]
    fn opaque_pointer_unifies() {
        let dev = Ty::ptr_to(Ty::Agg("device".into()));
        assert!(Ty::Ptr(None).compatible(&dev));
        assert!(dev.compatible(&Ty::Ptr(None)));
        assert!(!dev.compatible(&Ty::ptr_to(Ty::Agg("node".into()))));
        assert_eq!(dev.to_string(), "ptr<device>");
    }
}

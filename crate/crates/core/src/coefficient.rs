//! Scalar conductivities ρ(x, y).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::mesh::{DomainSpec, InterfaceCurve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("cannot evaluate coefficient at ({x}, {y}): {reason}")]
    Eval { x: f64, y: f64, reason: String },
    #[error("expression syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("invalid coefficient: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant {
        value: f64,
    },
    /// x² + 1/8
    SmoothX2,
    /// |x| + 1/8
    LipschitzAbsX,
    /// x² + y² + 1
    RadiusSq,
    /// √(x² + y²)
    Radius,
    /// Distance to `point`.
    DistToPoint {
        point: Point,
    },
    /// ρ₋ for |x| ≤ r₁, ρ₊ beyond.
    PiecewiseRadial {
        r0: f64,
        r1: f64,
        rho_minus: f64,
        rho_plus: f64,
    },
    /// ρ₋ for y ≤ y₁, ρ₊ above.
    PiecewiseHalfplane {
        y1: f64,
        rho_minus: f64,
        rho_plus: f64,
    },
    Custom {
        expr: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CoefficientSpec {
    #[serde(flatten)]
    kind: CoefficientKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degenerate_points: Option<Vec<Point>>,
}

/// An evaluable conductivity with the points where it vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientSpec", into = "CoefficientSpec")]
pub struct CoefficientField {
    kind: CoefficientKind,
    degenerate_points: Vec<Point>,
    explicit_degenerate: bool,
    expr: Option<Expr>,
}

impl TryFrom<CoefficientSpec> for CoefficientField {
    type Error = CoefficientError;

    fn try_from(spec: CoefficientSpec) -> Result<Self, Self::Error> {
        let mut f = CoefficientField::new(spec.kind)?;
        if let Some(pts) = spec.degenerate_points {
            f.degenerate_points = pts;
            f.explicit_degenerate = true;
        }
        Ok(f)
    }
}

impl From<CoefficientField> for CoefficientSpec {
    fn from(f: CoefficientField) -> Self {
        CoefficientSpec { degenerate_points: f.explicit_degenerate.then_some(f.degenerate_points), kind: f.kind }
    }
}

impl CoefficientField {
    pub fn new(kind: CoefficientKind) -> Result<Self, CoefficientError> {
        let invalid = |m: &str| Err(CoefficientError::Invalid(m.to_string()));
        let mut expr = None;
        let degenerate_points = match &kind {
            CoefficientKind::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return invalid("constant must be finite and nonnegative");
                }
                if *value == 0.0 {
                    return invalid("constant coefficient must be positive");
                }
                vec![]
            }
            CoefficientKind::Radius => vec![Point::ORIGIN],
            CoefficientKind::DistToPoint { point } => {
                if !point.is_finite() {
                    return invalid("point must be finite");
                }
                vec![*point]
            }
            CoefficientKind::PiecewiseRadial { r0, r1, rho_minus, rho_plus } => {
                if !(*r0 > 0.0 && r0 < r1 && r1.is_finite()) {
                    return invalid("piecewise radial radii must satisfy 0 < r0 < r1");
                }
                if !(*rho_minus > 0.0 && *rho_plus > 0.0 && rho_minus.is_finite() && rho_plus.is_finite()) {
                    return invalid("piecewise values must be positive");
                }
                vec![]
            }
            CoefficientKind::PiecewiseHalfplane { y1, rho_minus, rho_plus } => {
                if !y1.is_finite() {
                    return invalid("y1 must be finite");
                }
                if !(*rho_minus > 0.0 && *rho_plus > 0.0 && rho_minus.is_finite() && rho_plus.is_finite()) {
                    return invalid("piecewise values must be positive");
                }
                vec![]
            }
            CoefficientKind::Custom { expr: src } => {
                expr = Some(parse_expr(src)?);
                vec![]
            }
            CoefficientKind::SmoothX2 | CoefficientKind::LipschitzAbsX | CoefficientKind::RadiusSq => vec![],
        };
        Ok(CoefficientField { kind, degenerate_points, explicit_degenerate: false, expr })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(CoefficientKind::Constant { value }).expect("positive constant")
    }

    pub fn custom(expr: &str) -> Result<Self, CoefficientError> {
        Self::new(CoefficientKind::Custom { expr: expr.to_string() })
    }

    pub fn with_degenerate_points(mut self, pts: Vec<Point>) -> Self {
        self.degenerate_points = pts;
        self.explicit_degenerate = true;
        self
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn degenerate_points(&self) -> &[Point] {
        &self.degenerate_points
    }

    /// Short identifier used in reports.
    pub fn name(&self) -> &'static str {
        match self.kind {
            CoefficientKind::Constant { .. } => "constant",
            CoefficientKind::SmoothX2 => "smooth_x2",
            CoefficientKind::LipschitzAbsX => "lipschitz_abs_x",
            CoefficientKind::RadiusSq => "radius_sq",
            CoefficientKind::Radius => "radius",
            CoefficientKind::DistToPoint { .. } => "dist_to_point",
            CoefficientKind::PiecewiseRadial { .. } => "piecewise_radial",
            CoefficientKind::PiecewiseHalfplane { .. } => "piecewise_halfplane",
            CoefficientKind::Custom { .. } => "custom",
        }
    }

    /// The discontinuity curve of piecewise kinds.
    pub fn interface(&self) -> Option<InterfaceCurve> {
        match self.kind {
            CoefficientKind::PiecewiseRadial { r1, .. } => Some(InterfaceCurve::Circle { center: Point::ORIGIN, radius: r1 }),
            CoefficientKind::PiecewiseHalfplane { y1, .. } => Some(InterfaceCurve::Line { y: y1 }),
            _ => None,
        }
    }

    /// ρ multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, CoefficientError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(CoefficientError::Invalid(format!("scale factor must be positive, got {c}")));
        }
        let kind = match &self.kind {
            CoefficientKind::Constant { value } => CoefficientKind::Constant { value: value * c },
            CoefficientKind::PiecewiseRadial { r0, r1, rho_minus, rho_plus } => {
                CoefficientKind::PiecewiseRadial { r0: *r0, r1: *r1, rho_minus: rho_minus * c, rho_plus: rho_plus * c }
            }
            CoefficientKind::PiecewiseHalfplane { y1, rho_minus, rho_plus } => {
                CoefficientKind::PiecewiseHalfplane { y1: *y1, rho_minus: rho_minus * c, rho_plus: rho_plus * c }
            }
            _ => {
                let src = match &self.kind {
                    CoefficientKind::Custom { expr } => expr.clone(),
                    other => builtin_expr(other),
                };
                CoefficientKind::Custom { expr: format!("{c:e} * ({src})") }
            }
        };
        Ok(CoefficientField::new(kind)?.with_degenerate_points(self.degenerate_points.clone()))
    }

    pub fn eval(&self, p: Point) -> Result<f64, CoefficientError> {
        let (x, y) = (p.x, p.y);
        let v = match &self.kind {
            CoefficientKind::Constant { value } => *value,
            CoefficientKind::SmoothX2 => x * x + 0.125,
            CoefficientKind::LipschitzAbsX => x.abs() + 0.125,
            CoefficientKind::RadiusSq => x * x + y * y + 1.0,
            CoefficientKind::Radius => x.hypot(y),
            CoefficientKind::DistToPoint { point } => (x - point.x).hypot(y - point.y),
            CoefficientKind::PiecewiseRadial { r1, rho_minus, rho_plus, .. } => {
                if x.hypot(y) <= *r1 {
                    *rho_minus
                } else {
                    *rho_plus
                }
            }
            CoefficientKind::PiecewiseHalfplane { y1, rho_minus, rho_plus } => {
                if y <= *y1 {
                    *rho_minus
                } else {
                    *rho_plus
                }
            }
            CoefficientKind::Custom { .. } => {
                let e = self.expr.as_ref().expect("parsed on construction");
                return e.eval(x, y).map_err(|reason| CoefficientError::Eval { x, y, reason });
            }
        };
        Ok(v)
    }

    /// Enclosure of ρ over the box `[x0, x1] × [y0, y1]`.
    pub fn bounds(&self, x: Interval, y: Interval) -> Interval {
        match &self.kind {
            CoefficientKind::Constant { value } => Interval::point(*value),
            CoefficientKind::SmoothX2 => x.sq() + Interval::point(0.125),
            CoefficientKind::LipschitzAbsX => x.abs() + Interval::point(0.125),
            CoefficientKind::RadiusSq => x.sq() + y.sq() + Interval::point(1.0),
            CoefficientKind::Radius => (x.sq() + y.sq()).sqrt(),
            CoefficientKind::DistToPoint { point } => ((x - Interval::point(point.x)).sq() + (y - Interval::point(point.y)).sq()).sqrt(),
            CoefficientKind::PiecewiseRadial { r1, rho_minus, rho_plus, .. } => {
                let r = (x.sq() + y.sq()).sqrt();
                two_valued(r.hi <= *r1, r.lo > *r1, *rho_minus, *rho_plus)
            }
            CoefficientKind::PiecewiseHalfplane { y1, rho_minus, rho_plus } => two_valued(y.hi <= *y1, y.lo > *y1, *rho_minus, *rho_plus),
            CoefficientKind::Custom { .. } => self.expr.as_ref().expect("parsed").bounds(x, y),
        }
    }

    /// Certified lower bound of ρ over the domain with ε-balls around the
    /// degenerate points removed. Cells of size `step` are bounded by
    /// interval arithmetic; cells cut by an exclusion circle are bisected.
    pub fn essential_lower_bound(&self, domain: &DomainSpec, exclusion: f64, step: f64) -> f64 {
        assert!(exclusion >= 0.0 && step > 0.0, "exclusion must be >= 0 and step > 0");
        if let CoefficientKind::Constant { value } = self.kind {
            return value;
        }
        let bb = domain.outer.bounding_box();
        let nx = (bb.width() / step).ceil().max(1.0) as usize;
        let ny = (bb.height() / step).ceil().max(1.0) as usize;
        let (sx, sy) = (bb.width() / nx as f64, bb.height() / ny as f64);
        let mut best = f64::INFINITY;
        for j in 0..ny {
            for i in 0..nx {
                let cell = Cell {
                    x: Interval::new(bb.min.x + i as f64 * sx, bb.min.x + (i + 1) as f64 * sx),
                    y: Interval::new(bb.min.y + j as f64 * sy, bb.min.y + (j + 1) as f64 * sy),
                };
                self.bound_cell(domain, exclusion, cell, 6, &mut best);
            }
        }
        if best.is_finite() {
            best.max(0.0)
        } else {
            0.0
        }
    }

    fn bound_cell(&self, domain: &DomainSpec, eps: f64, cell: Cell, depth: u32, best: &mut f64) {
        if cell.outside(domain) {
            return;
        }
        let mut cut = false;
        for v in &self.degenerate_points {
            let (near, far) = cell.distance_range(*v);
            if far < eps {
                return;
            }
            if near < eps {
                cut = true;
            }
        }
        let lo = self.bounds(cell.x, cell.y).lo;
        if lo >= *best {
            return;
        }
        if cut && depth > 0 {
            for c in cell.split() {
                self.bound_cell(domain, eps, c, depth - 1, best);
            }
            return;
        }
        *best = lo;
    }
}

fn two_valued(all_minus: bool, all_plus: bool, minus: f64, plus: f64) -> Interval {
    if all_minus {
        Interval::point(minus)
    } else if all_plus {
        Interval::point(plus)
    } else {
        Interval::new(minus.min(plus), minus.max(plus))
    }
}

fn builtin_expr(kind: &CoefficientKind) -> String {
    match kind {
        CoefficientKind::SmoothX2 => "x^2 + 0.125".into(),
        CoefficientKind::LipschitzAbsX => "abs(x) + 0.125".into(),
        CoefficientKind::RadiusSq => "x^2 + y^2 + 1".into(),
        CoefficientKind::Radius => "sqrt(x^2 + y^2)".into(),
        CoefficientKind::DistToPoint { point } => format!("sqrt((x - ({:e}))^2 + (y - ({:e}))^2)", point.x, point.y),
        _ => unreachable!("only closed-form kinds"),
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    x: Interval,
    y: Interval,
}

impl Cell {
    fn distance_range(&self, p: Point) -> (f64, f64) {
        let dx_near = (self.x.lo - p.x).max(0.0).max(p.x - self.x.hi);
        let dy_near = (self.y.lo - p.y).max(0.0).max(p.y - self.y.hi);
        let dx_far = (p.x - self.x.lo).abs().max((p.x - self.x.hi).abs());
        let dy_far = (p.y - self.y.lo).abs().max((p.y - self.y.hi).abs());
        (dx_near.hypot(dy_near), dx_far.hypot(dy_far))
    }

    fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x.lo, self.y.lo),
            Point::new(self.x.hi, self.y.lo),
            Point::new(self.x.hi, self.y.hi),
            Point::new(self.x.lo, self.y.hi),
        ]
    }

    /// True when no point of the cell belongs to the domain.
    fn outside(&self, domain: &DomainSpec) -> bool {
        let (near, _) = self.distance_range(domain.outer.center());
        if near >= domain.outer.radius() {
            return true;
        }
        if let Some(hp) = domain.outer.half_plane() {
            if self.corners().iter().all(|c| hp.normal.dot(*c) - hp.offset <= 0.0) {
                return true;
            }
        }
        domain.holes.iter().any(|h| self.distance_range(h.center).1 <= h.radius)
    }

    fn split(&self) -> [Cell; 4] {
        let (xm, ym) = (0.5 * (self.x.lo + self.x.hi), 0.5 * (self.y.lo + self.y.hi));
        let xs = [Interval::new(self.x.lo, xm), Interval::new(xm, self.x.hi)];
        let ys = [Interval::new(self.y.lo, ym), Interval::new(ym, self.y.hi)];
        [Cell { x: xs[0], y: ys[0] }, Cell { x: xs[1], y: ys[0] }, Cell { x: xs[0], y: ys[1] }, Cell { x: xs[1], y: ys[1] }]
    }
}

/// Closed interval `[lo, hi]`; unbounded ends are infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo: lo.min(hi), hi: lo.max(hi) }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    const ALL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    fn sq(self) -> Interval {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.lo <= 0.0 && self.hi >= 0.0 {
            Interval { lo: 0.0, hi: a.max(b) }
        } else {
            Interval::new(a, b)
        }
    }

    fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            Interval { lo: -self.hi, hi: -self.lo }
        } else {
            Interval { lo: 0.0, hi: (-self.lo).max(self.hi) }
        }
    }

    fn sqrt(self) -> Interval {
        Interval { lo: self.lo.max(0.0).sqrt(), hi: self.hi.max(0.0).sqrt() }
    }

    fn powi(self, n: u32) -> Interval {
        let mut acc = Interval::point(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        if n.is_multiple_of(2) && n > 0 {
            // Even powers are nonnegative.
            acc.lo = acc.lo.max(0.0);
        }
        acc
    }

    fn recip(self) -> Interval {
        if self.lo > 0.0 || self.hi < 0.0 {
            Interval::new(1.0 / self.hi, 1.0 / self.lo)
        } else {
            Interval::ALL
        }
    }
}

impl std::ops::Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }
}

impl std::ops::Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }
}

impl std::ops::Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        if c.iter().any(|v| v.is_nan()) {
            return Interval::ALL;
        }
        Interval { lo: c.iter().copied().fold(f64::INFINITY, f64::min), hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max) }
    }
}

/// Parsed custom expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    Abs(Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, String> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(a) => -a.eval(x, y)?,
            Expr::Add(a, b) => a.eval(x, y)? + b.eval(x, y)?,
            Expr::Sub(a, b) => a.eval(x, y)? - b.eval(x, y)?,
            Expr::Mul(a, b) => a.eval(x, y)? * b.eval(x, y)?,
            Expr::Div(a, b) => {
                let d = b.eval(x, y)?;
                if d == 0.0 {
                    return Err("division by zero".into());
                }
                a.eval(x, y)? / d
            }
            Expr::Sqrt(a) => {
                let v = a.eval(x, y)?;
                if v < 0.0 {
                    return Err(format!("square root of negative value {v}"));
                }
                v.sqrt()
            }
            Expr::Abs(a) => a.eval(x, y)?.abs(),
            Expr::Pow(a, n) => a.eval(x, y)?.powi(*n as i32),
        })
    }

    fn bounds(&self, x: Interval, y: Interval) -> Interval {
        match self {
            Expr::Num(v) => Interval::point(*v),
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(a) => {
                let i = a.bounds(x, y);
                Interval { lo: -i.hi, hi: -i.lo }
            }
            Expr::Add(a, b) => a.bounds(x, y) + b.bounds(x, y),
            Expr::Sub(a, b) => a.bounds(x, y) - b.bounds(x, y),
            Expr::Mul(a, b) => a.bounds(x, y) * b.bounds(x, y),
            Expr::Div(a, b) => a.bounds(x, y) * b.bounds(x, y).recip(),
            Expr::Sqrt(a) => a.bounds(x, y).sqrt(),
            Expr::Abs(a) => a.bounds(x, y).abs(),
            Expr::Pow(a, n) => a.bounds(x, y).powi(*n),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X => write!(f, "x"),
            Expr::Y => write!(f, "y"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
        }
    }
}

/// Parses the custom-coefficient grammar (`+ - * / ^`, `sqrt`, `abs`, `x`, `y`).
pub fn parse_expr(src: &str) -> Result<Expr, CoefficientError> {
    let mut p = Parser { s: src.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> CoefficientError {
        CoefficientError::Syntax { column: self.pos + 1, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, CoefficientError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, CoefficientError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, CoefficientError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let mut base = self.atom()?;
        while self.eat(b'^') {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("exponent must be a nonnegative integer"));
            }
            let n: u32 =
                std::str::from_utf8(&self.s[start..self.pos]).expect("ascii digits").parse().map_err(|_| self.err("exponent too large"))?;
            base = Expr::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, CoefficientError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
                match word {
                    "x" | "x1" => Ok(Expr::X),
                    "y" | "x2" => Ok(Expr::Y),
                    "sqrt" | "abs" => {
                        if !self.eat(b'(') {
                            return Err(self.err("expected `(` after function name"));
                        }
                        let e = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.err("expected `)`"));
                        }
                        Ok(if word == "sqrt" { Expr::Sqrt(Box::new(e)) } else { Expr::Abs(Box::new(e)) })
                    }
                    _ => {
                        self.pos = start;
                        Err(self.err(&format!("unknown identifier `{word}`")))
                    }
                }
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, CoefficientError> {
        let start = self.pos;
        let s = self.s;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(&mut self.pos);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse().map(Expr::Num).map_err(|_| {
            self.pos = start;
            self.err("invalid number")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{HoleSpec, OuterShape};

    #[test]
    fn builtin_values() {
        let at = |k: CoefficientKind, x: f64, y: f64| CoefficientField::new(k).unwrap().eval(Point::new(x, y)).unwrap();
        assert_eq!(at(CoefficientKind::SmoothX2, 0.0, 0.0), 0.125);
        assert_eq!(at(CoefficientKind::Radius, 0.0, 0.0), 0.0);
        let pr = CoefficientKind::PiecewiseRadial { r0: 0.05, r1: 0.5, rho_minus: 1.0, rho_plus: 21.0 };
        assert_eq!(at(pr.clone(), 0.7, 0.0), 21.0);
        assert_eq!(at(pr, 0.5, 0.0), 1.0);
        let hp = CoefficientKind::PiecewiseHalfplane { y1: 0.5, rho_minus: 1.0, rho_plus: 1001.0 };
        assert_eq!(at(hp.clone(), 0.0, 0.5), 1.0);
        assert_eq!(at(hp, 0.0, 0.6), 1001.0);
    }

    #[test]
    fn custom_grammar() {
        let f = CoefficientField::custom("sqrt(x^2+y^2)").unwrap();
        assert_eq!(f.eval(Point::new(3.0, 4.0)).unwrap(), 5.0);
        let g = CoefficientField::custom("1 + x + 2*y - -abs(x)/4").unwrap();
        assert_eq!(g.eval(Point::new(-2.0, 1.0)).unwrap(), 1.0 - 2.0 + 2.0 + 0.5);
        assert!(matches!(CoefficientField::custom("1/x").unwrap().eval(Point::ORIGIN), Err(CoefficientError::Eval { .. })));
        assert!(matches!(CoefficientField::custom("1 + z"), Err(CoefficientError::Syntax { column: 5, .. })));
        assert!(CoefficientField::custom("2e-3*x^2").is_ok());
        assert!(CoefficientField::custom("(x").is_err());
    }

    #[test]
    fn lower_bounds() {
        let annulus = DomainSpec::annulus(0.05, 1.0);
        let c = CoefficientField::constant(3.0);
        assert_eq!(c.essential_lower_bound(&annulus, 0.0, 0.01), 3.0);
        let s = CoefficientField::new(CoefficientKind::SmoothX2).unwrap();
        let lb = s.essential_lower_bound(&annulus, 0.0, 0.0125);
        assert!((lb - 0.125).abs() < 1e-6, "{lb}");
        let half = DomainSpec {
            outer: OuterShape::HalfDisc { center: Point::new(0.0, -1.0), radius: 2.0, normal: Point::new(0.0, 1.0), offset: -1.0 },
            holes: vec![HoleSpec { center: Point::ORIGIN, radius: 0.01 }],
            corner_vertices: vec![],
        };
        let d = CoefficientField::new(CoefficientKind::DistToPoint { point: Point::new(2.0, -1.0) }).unwrap();
        let lb = d.essential_lower_bound(&half, 0.1, 0.0125);
        assert!((0.05..=0.1).contains(&lb), "{lb}");
    }

    #[test]
    fn json_round_trip() {
        let f: CoefficientField = serde_json::from_str(r#"{"kind":"custom","expr":"x^2 + 1"}"#).unwrap();
        let back: CoefficientField = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(f, back);
        let g: CoefficientField = serde_json::from_str(r#"{"kind":"dist_to_point","point":[2,-1]}"#).unwrap();
        assert_eq!(g.degenerate_points(), &[Point::new(2.0, -1.0)]);
        assert!(serde_json::from_str::<CoefficientField>(r#"{"kind":"piecewise_radial","r0":0.5,"r1":0.1,"rho_minus":1,"rho_plus":2}"#)
            .is_err());
    }

    #[test]
    fn scaling_is_linear() {
        for k in [CoefficientKind::RadiusSq, CoefficientKind::SmoothX2, CoefficientKind::Radius] {
            let f = CoefficientField::new(k).unwrap();
            let g = f.scaled(3.5).unwrap();
            let p = Point::new(0.3, -0.7);
            assert!((g.eval(p).unwrap() - 3.5 * f.eval(p).unwrap()).abs() < 1e-14);
        }
    }
}

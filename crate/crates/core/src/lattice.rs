//! Planar surface-code geometry, syndrome extraction and logical-class
//! arithmetic.
//!
//! The code lives on a rectangular patch with smooth edges at the left and
//! right and rough edges at the top and bottom. Everything is indexed on a
//! `(2M-1) x (2L-1)` grid:
//!
//! - data qubits sit at `(r, c)` with `r + c` even. Even columns hold
//!   vertical bonds of the direct lattice, odd columns horizontal bonds;
//! - vertex stabilizers `S_v^X` sit at `(r odd, c even)`;
//! - plaquette stabilizers `S_p^Z` sit at `(r even, c odd)`.
//!
//! `L` is the length of the stored logical `X̄` (top row of vertical-bond
//! qubits, connecting the smooth edges) and `M` the length of the stored
//! `Z̄` (rightmost column, connecting the rough edges). The two paths share
//! exactly one qubit. In the transfer-matrix picture a qubit at row `r`
//! acts on chain site `r + 1` (1-based), so odd chain sites carry dual
//! (plaquette) spins and even sites carry direct (vertex) spins.
//!
//! Qubit indices are assigned in circuit order: column-major from the left,
//! ascending row inside each column, which is exactly the layer order
//! `V(1) H(1) V(2) ... V(L)` in which gates are applied and error strings
//! are sampled.

use num_complex::Complex64;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice sides must satisfy L >= 2 and M >= 2, got L={0}, M={1}")]
    TooSmall(usize, usize),
    #[error("eta configuration has length {0}, layout has {1} qubits")]
    LengthMismatch(usize, usize),
    #[error("logical class comparison requires equal syndromes")]
    SyndromeMismatch,
}

/// Direct-lattice bond orientation of a data qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Connects two vertices in the same column (even grid column).
    Vertical,
    /// Connects two vertices in the same row (odd grid column).
    Horizontal,
}

/// One data qubit of the layout.
#[derive(Clone, Debug)]
pub struct Qubit {
    /// Grid row, `0..=2M-2`.
    pub row: usize,
    /// Grid column, `0..=2L-2`.
    pub col: usize,
    pub orientation: Orientation,
    /// Transfer-matrix layer `l` (1-based; vertical and horizontal layers
    /// count separately).
    pub layer: usize,
    /// Chain site `m` in `1..=2M-1` the qubit's gate is centred on.
    pub chain_site: usize,
    /// Adjacent vertex stabilizers (absent across rough boundaries).
    pub vertices: [Option<usize>; 2],
    /// Adjacent plaquette stabilizers (absent across smooth boundaries).
    pub plaquettes: [Option<usize>; 2],
}

/// A stabilizer generator and the qubits it acts on.
#[derive(Clone, Debug)]
pub struct Stabilizer {
    pub row: usize,
    pub col: usize,
    pub qubits: Vec<usize>,
}

/// Immutable geometry shared by every module.
#[derive(Clone, Debug)]
pub struct CodeLayout {
    l: usize,
    m: usize,
    qubits: Vec<Qubit>,
    vertices: Vec<Stabilizer>,
    plaquettes: Vec<Stabilizer>,
    xbar: Vec<usize>,
    zbar: Vec<usize>,
    xbar_mask: Vec<bool>,
    zbar_mask: Vec<bool>,
    /// Grid lookup: `(r * (2L-1) + c) -> qubit index`.
    grid: Vec<Option<usize>>,
}

/// Signs `(η^x_j, η^z_j) ∈ {±1}²` encoding a reference Pauli string:
/// `η^x_j = -1` marks an `X` on qubit `j`, `η^z_j = -1` a `Z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EtaConfig {
    pub x: Vec<i8>,
    pub z: Vec<i8>,
}

impl EtaConfig {
    /// The identity string (all signs `+1`).
    pub fn identity(n: usize) -> Self {
        Self {
            x: vec![1; n],
            z: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Pauli content of qubit `j` as a slot code:
    /// `0 = I, 1 = X, 2 = XZ (Y up to phase), 3 = Z`.
    pub fn code(&self, j: usize) -> usize {
        match (self.x[j], self.z[j]) {
            (1, 1) => 0,
            (-1, 1) => 1,
            (-1, -1) => 2,
            (1, -1) => 3,
            _ => unreachable!("eta signs must be ±1"),
        }
    }

    pub fn set_code(&mut self, j: usize, code: usize) {
        let (x, z) = match code {
            0 => (1, 1),
            1 => (-1, 1),
            2 => (-1, -1),
            3 => (1, -1),
            _ => panic!("invalid slot code {code}"),
        };
        self.x[j] = x;
        self.z[j] = z;
    }

    /// Componentwise sign product with another configuration.
    pub fn compose(&self, other: &EtaConfig) -> EtaConfig {
        assert_eq!(self.len(), other.len(), "eta length mismatch");
        EtaConfig {
            x: self
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| a * b)
                .collect(),
            z: self
                .z
                .iter()
                .zip(&other.z)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn flip_x(&mut self, qubits: &[usize]) {
        for &j in qubits {
            self.x[j] = -self.x[j];
        }
    }

    pub fn flip_z(&mut self, qubits: &[usize]) {
        for &j in qubits {
            self.z[j] = -self.z[j];
        }
    }

    /// Dense integer encoding (2 bits per qubit), used by the exact
    /// distribution oracle. Qubit 0 occupies the least significant pair.
    pub fn to_index(&self) -> usize {
        let mut idx = 0usize;
        for j in (0..self.len()).rev() {
            idx = idx * 4 + self.code(j);
        }
        idx
    }

    pub fn from_index(n: usize, mut idx: usize) -> Self {
        let mut eta = EtaConfig::identity(n);
        for j in 0..n {
            eta.set_code(j, idx % 4);
            idx /= 4;
        }
        eta
    }
}

/// Defect pattern of a syndrome measurement: `true` marks `S = -1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syndrome {
    pub vertices: Vec<bool>,
    pub plaquettes: Vec<bool>,
}

impl Syndrome {
    pub fn is_empty(&self) -> bool {
        !self.vertices.iter().any(|&d| d) && !self.plaquettes.iter().any(|&d| d)
    }

    pub fn vertex_defects(&self) -> impl Iterator<Item = usize> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| d.then_some(i))
    }

    pub fn plaquette_defects(&self) -> impl Iterator<Item = usize> + '_ {
        self.plaquettes
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| d.then_some(i))
    }

    /// Stable FNV-1a hash of the defect pattern, for CSV reporting.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |bit: bool| {
            h ^= bit as u64 + 1;
            h = h.wrapping_mul(0x100000001b3);
        };
        self.vertices.iter().for_each(|&b| feed(b));
        self.plaquettes.iter().for_each(|&b| feed(b));
        h
    }
}

/// Logical equivalence class of a correction, `Z₂ x Z₂` under composition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogicalClass {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl LogicalClass {
    pub fn from_components(has_x: bool, has_z: bool) -> Self {
        match (has_x, has_z) {
            (false, false) => LogicalClass::I,
            (true, false) => LogicalClass::X,
            (true, true) => LogicalClass::Y,
            (false, true) => LogicalClass::Z,
        }
    }

    pub fn components(self) -> (bool, bool) {
        match self {
            LogicalClass::I => (false, false),
            LogicalClass::X => (true, false),
            LogicalClass::Y => (true, true),
            LogicalClass::Z => (false, true),
        }
    }

    pub fn compose(self, other: LogicalClass) -> LogicalClass {
        let (ax, az) = self.components();
        let (bx, bz) = other.components();
        LogicalClass::from_components(ax ^ bx, az ^ bz)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => LogicalClass::I,
            1 => LogicalClass::X,
            2 => LogicalClass::Y,
            3 => LogicalClass::Z,
            _ => panic!("invalid class index {i}"),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogicalClass::I => "I",
            LogicalClass::X => "X",
            LogicalClass::Y => "Y",
            LogicalClass::Z => "Z",
        }
    }
}

/// Build the planar layout with `X̄` of length `L` and `Z̄` of length `M`.
pub fn build_layout(l: usize, m: usize) -> Result<CodeLayout, LatticeError> {
    if l < 2 || m < 2 {
        return Err(LatticeError::TooSmall(l, m));
    }
    let rows = 2 * m - 1;
    let cols = 2 * l - 1;
    let mut grid = vec![None; rows * cols];
    let mut qubits = Vec::new();

    // Circuit order: column-major, ascending row.
    for c in 0..cols {
        for r in 0..rows {
            if (r + c) % 2 != 0 {
                continue;
            }
            let id = qubits.len();
            grid[r * cols + c] = Some(id);
            let (orientation, layer) = if c % 2 == 0 {
                (Orientation::Vertical, c / 2 + 1)
            } else {
                (Orientation::Horizontal, (c + 1) / 2)
            };
            qubits.push(Qubit {
                row: r,
                col: c,
                orientation,
                layer,
                chain_site: r + 1,
                vertices: [None, None],
                plaquettes: [None, None],
            });
        }
    }

    // Vertex stabilizers at (r odd, c even), indexed column-major to match
    // the qubit sweep.
    let mut vertices = Vec::new();
    let mut vertex_at = vec![None; rows * cols];
    for c in (0..cols).step_by(2) {
        for r in (1..rows).step_by(2) {
            vertex_at[r * cols + c] = Some(vertices.len());
            vertices.push(Stabilizer {
                row: r,
                col: c,
                qubits: Vec::new(),
            });
        }
    }
    // Plaquette stabilizers at (r even, c odd).
    let mut plaquettes = Vec::new();
    let mut plaquette_at = vec![None; rows * cols];
    for c in (1..cols).step_by(2) {
        for r in (0..rows).step_by(2) {
            plaquette_at[r * cols + c] = Some(plaquettes.len());
            plaquettes.push(Stabilizer {
                row: r,
                col: c,
                qubits: Vec::new(),
            });
        }
    }

    // Incidence. Every qubit touches up to two vertices and two
    // plaquettes; neighbours beyond a boundary are simply absent.
    let lookup = |table: &Vec<Option<usize>>, r: isize, c: isize| -> Option<usize> {
        if r < 0 || c < 0 || r as usize >= rows || c as usize >= cols {
            None
        } else {
            table[r as usize * cols + c as usize]
        }
    };
    for (id, q) in qubits.iter_mut().enumerate() {
        let (r, c) = (q.row as isize, q.col as isize);
        let (v_offsets, p_offsets): ([(isize, isize); 2], [(isize, isize); 2]) =
            match q.orientation {
                Orientation::Vertical => ([(-1, 0), (1, 0)], [(0, -1), (0, 1)]),
                Orientation::Horizontal => ([(0, -1), (0, 1)], [(-1, 0), (1, 0)]),
            };
        for (slot, (dr, dc)) in v_offsets.iter().enumerate() {
            if let Some(v) = lookup(&vertex_at, r + dr, c + dc) {
                q.vertices[slot] = Some(v);
                vertices[v].qubits.push(id);
            }
        }
        for (slot, (dr, dc)) in p_offsets.iter().enumerate() {
            if let Some(p) = lookup(&plaquette_at, r + dr, c + dc) {
                q.plaquettes[slot] = Some(p);
                plaquettes[p].qubits.push(id);
            }
        }
    }

    // Stored logical representatives: X̄ along the top row of vertical
    // bonds, Z̄ down the rightmost column. They intersect in exactly one
    // qubit, the top-right corner.
    let xbar: Vec<usize> = (0..cols)
        .step_by(2)
        .map(|c| grid[c].expect("top-row qubit"))
        .collect();
    let zbar: Vec<usize> = (0..rows)
        .step_by(2)
        .map(|r| grid[r * cols + (cols - 1)].expect("right-column qubit"))
        .collect();
    let mut xbar_mask = vec![false; qubits.len()];
    let mut zbar_mask = vec![false; qubits.len()];
    for &j in &xbar {
        xbar_mask[j] = true;
    }
    for &j in &zbar {
        zbar_mask[j] = true;
    }

    Ok(CodeLayout {
        l,
        m,
        qubits,
        vertices,
        plaquettes,
        xbar,
        zbar,
        xbar_mask,
        zbar_mask,
        grid,
    })
}

impl CodeLayout {
    pub fn l_len(&self) -> usize {
        self.l
    }

    pub fn m_len(&self) -> usize {
        self.m
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    /// Number of transfer-chain sites, `2M - 1`.
    pub fn chain_len(&self) -> usize {
        2 * self.m - 1
    }

    pub fn qubit(&self, j: usize) -> &Qubit {
        &self.qubits[j]
    }

    pub fn qubits(&self) -> &[Qubit] {
        &self.qubits
    }

    pub fn vertices(&self) -> &[Stabilizer] {
        &self.vertices
    }

    pub fn plaquettes(&self) -> &[Stabilizer] {
        &self.plaquettes
    }

    pub fn qubit_at(&self, row: usize, col: usize) -> Option<usize> {
        self.grid.get(row * (2 * self.l - 1) + col).copied().flatten()
    }

    /// Stored representative of the logical `X̄` (length `L`).
    pub fn xbar_path(&self) -> &[usize] {
        &self.xbar
    }

    /// Stored representative of the logical `Z̄` (length `M`); this is the
    /// rightmost vertical layer, which is what lets a `Z̄` insertion be
    /// implemented as the product of `σ^x` over odd chain sites.
    pub fn zbar_path(&self) -> &[usize] {
        &self.zbar
    }

    pub fn on_xbar(&self, j: usize) -> bool {
        self.xbar_mask[j]
    }

    pub fn on_zbar(&self, j: usize) -> bool {
        self.zbar_mask[j]
    }

    /// Circuit visiting order of qubits. Identical to index order by
    /// construction; kept explicit so every module reads the same contract.
    pub fn circuit_order(&self) -> impl Iterator<Item = usize> + '_ {
        0..self.qubits.len()
    }

    /// First circuit position belonging to the final vertical layer.
    pub fn final_layer_start(&self) -> usize {
        self.qubits.len() - self.m
    }

    /// Compose `eta` with the stored logical representative of `class`.
    pub fn compose_logical(&self, eta: &EtaConfig, class: LogicalClass) -> EtaConfig {
        let mut out = eta.clone();
        let (has_x, has_z) = class.components();
        if has_x {
            out.flip_x(&self.xbar);
        }
        if has_z {
            out.flip_z(&self.zbar);
        }
        out
    }

    /// Phase relating the canonically ordered string of `η` composed with
    /// the class-`class` path flips to the operator `Ō^μ · R(η)` built
    /// from the fixed Hermitian logicals (`Ȳ = i X̄ Z̄`):
    ///
    /// ```text
    /// R(η ⊕ μ-flips) = phase · Ō^μ · R(η)
    /// ```
    ///
    /// Amplitudes produced by η-composition (the spin sum, the circuit)
    /// divide by this phase to land in the convention where `D_s = Σ_μ
    /// Z_μ Ō^μ`, which is what the Bloch-sphere identities assume. The
    /// phase is `±1` for X (a minus for every `Z` of `η` sitting on the
    /// X̄ path) and `±i` for Y; it never affects `|Z|²`.
    pub fn logical_phase(&self, eta: &EtaConfig, class: LogicalClass) -> Complex64 {
        let eps_x = || -> f64 {
            let crossings = self
                .xbar
                .iter()
                .filter(|&&j| eta.z[j] == -1)
                .count();
            if crossings % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        match class {
            LogicalClass::I | LogicalClass::Z => Complex64::new(1.0, 0.0),
            LogicalClass::X => Complex64::new(eps_x(), 0.0),
            LogicalClass::Y => Complex64::new(0.0, eps_x()),
        }
    }

    /// Debug dump: one line per qubit `j l m orientation`, then one line
    /// per stabilizer with its incident link indices.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (j, q) in self.qubits.iter().enumerate() {
            let o = match q.orientation {
                Orientation::Vertical => 'v',
                Orientation::Horizontal => 'h',
            };
            let _ = writeln!(s, "{} {} {} {}", j, q.layer, q.chain_site, o);
        }
        for (i, v) in self.vertices.iter().enumerate() {
            let links: Vec<String> = v.qubits.iter().map(|q| q.to_string()).collect();
            let _ = writeln!(s, "Sv {} {}", i, links.join(" "));
        }
        for (i, p) in self.plaquettes.iter().enumerate() {
            let links: Vec<String> = p.qubits.iter().map(|q| q.to_string()).collect();
            let _ = writeln!(s, "Sp {} {}", i, links.join(" "));
        }
        s
    }
}

/// Extract the syndrome of a reference string: a vertex defects iff an odd
/// number of its links carry `η^z = -1`, a plaquette iff an odd number
/// carry `η^x = -1`. Strings running into a rough (top/bottom) or smooth
/// (left/right) boundary are absorbed there.
pub fn syndrome_of(layout: &CodeLayout, eta: &EtaConfig) -> Result<Syndrome, LatticeError> {
    if eta.len() != layout.num_qubits() {
        return Err(LatticeError::LengthMismatch(eta.len(), layout.num_qubits()));
    }
    let mut vertices = vec![false; layout.vertices.len()];
    let mut plaquettes = vec![false; layout.plaquettes.len()];
    for (j, q) in layout.qubits.iter().enumerate() {
        if eta.z[j] == -1 {
            for v in q.vertices.iter().flatten() {
                vertices[*v] = !vertices[*v];
            }
        }
        if eta.x[j] == -1 {
            for p in q.plaquettes.iter().flatten() {
                plaquettes[*p] = !plaquettes[*p];
            }
        }
    }
    Ok(Syndrome {
        vertices,
        plaquettes,
    })
}

/// Logical class of the product string `η·η'` for two strings with equal
/// syndrome. The product is closed up to boundary absorption, so its class
/// is read off from crossing parities with the stored logical paths.
pub fn logical_class(
    layout: &CodeLayout,
    eta: &EtaConfig,
    eta_prime: &EtaConfig,
) -> Result<LogicalClass, LatticeError> {
    if syndrome_of(layout, eta)? != syndrome_of(layout, eta_prime)? {
        return Err(LatticeError::SyndromeMismatch);
    }
    let mut x_crossings = 0usize;
    let mut z_crossings = 0usize;
    for j in 0..layout.num_qubits() {
        let dx = eta.x[j] * eta_prime.x[j];
        let dz = eta.z[j] * eta_prime.z[j];
        if dx == -1 && layout.on_zbar(j) {
            x_crossings += 1;
        }
        if dz == -1 && layout.on_xbar(j) {
            z_crossings += 1;
        }
    }
    Ok(LogicalClass::from_components(
        x_crossings % 2 == 1,
        z_crossings % 2 == 1,
    ))
}

/// Deterministic correction representative for a syndrome: each vertex
/// defect is routed straight up to the top rough edge by a `Z`-string,
/// each plaquette defect straight left to the smooth edge by an
/// `X`-string. Any other representative differs only by stabilizer loops
/// and logicals, which downstream classification absorbs.
pub fn canonical_correction(layout: &CodeLayout, s: &Syndrome) -> EtaConfig {
    let mut eta = EtaConfig::identity(layout.num_qubits());
    for v in s.vertex_defects() {
        let stab = &layout.vertices[v];
        let mut r = stab.row as isize - 1;
        while r >= 0 {
            let j = layout
                .qubit_at(r as usize, stab.col)
                .expect("vertical path qubit");
            eta.z[j] = -eta.z[j];
            r -= 2;
        }
    }
    for p in s.plaquette_defects() {
        let stab = &layout.plaquettes[p];
        let mut c = stab.col as isize - 1;
        while c >= 0 {
            let j = layout
                .qubit_at(stab.row, c as usize)
                .expect("horizontal path qubit");
            eta.x[j] = -eta.x[j];
            c -= 2;
        }
    }
    eta
}

/// Compose `eta` with stabilizer generator `v` (an `X` loop).
pub fn apply_vertex_stabilizer(layout: &CodeLayout, eta: &mut EtaConfig, v: usize) {
    let qubits = layout.vertices[v].qubits.clone();
    eta.flip_x(&qubits);
}

/// Compose `eta` with stabilizer generator `p` (a `Z` loop).
pub fn apply_plaquette_stabilizer(layout: &CodeLayout, eta: &mut EtaConfig, p: usize) {
    let qubits = layout.plaquettes[p].qubits.clone();
    eta.flip_z(&qubits);
}

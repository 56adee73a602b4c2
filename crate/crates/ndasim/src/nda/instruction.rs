//! Coarse-grain NDA vector instructions.
//!
//! One instruction targets one rank and describes work whose memory access
//! pattern is fully determined by the operand descriptors — the property
//! the host-side FSM replicas rely on. Operands of allocator-backed
//! instructions live within a single system row; the runtime splits larger
//! API-level operations into per-(system row, rank) instructions.

use crate::addressing::{MapError, MappingConfig, PhysicalAddress};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LaunchError {
    #[error("operands span ranks: {0}")]
    LocalityViolation(String),
    #[error("element count {n} exceeds bound {bound}")]
    BoundsViolation { n: u32, bound: u32 },
    #[error("invalid instruction: {0}")]
    Invalid(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Opcode {
    Axpby,
    Axpbypcz,
    Axpy,
    Copy,
    Xmy,
    Dot,
    Nrm2,
    Scal,
    Gemv,
}

impl Opcode {
    pub fn from_str(s: &str) -> Option<Opcode> {
        Some(match s.to_ascii_lowercase().as_str() {
            "axpby" => Opcode::Axpby,
            "axpbypcz" => Opcode::Axpbypcz,
            "axpy" => Opcode::Axpy,
            "copy" => Opcode::Copy,
            "xmy" => Opcode::Xmy,
            "dot" => Opcode::Dot,
            "nrm2" => Opcode::Nrm2,
            "scal" => Opcode::Scal,
            "gemv" => Opcode::Gemv,
            _ => return None,
        })
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Opcode::Axpby => 0,
            Opcode::Axpbypcz => 1,
            Opcode::Axpy => 2,
            Opcode::Copy => 3,
            Opcode::Xmy => 4,
            Opcode::Dot => 5,
            Opcode::Nrm2 => 6,
            Opcode::Scal => 7,
            Opcode::Gemv => 8,
        }
    }

    /// Operand count, including outputs.
    pub fn operand_count(self) -> usize {
        match self {
            Opcode::Scal | Opcode::Nrm2 => 1,
            Opcode::Copy | Opcode::Axpy | Opcode::Dot => 2,
            Opcode::Xmy | Opcode::Axpby | Opcode::Gemv => 3,
            Opcode::Axpbypcz => 4,
        }
    }

    /// Whether the operation produces a scalar per lane instead of memory
    /// writes (reduction handled by the host afterwards).
    pub fn is_reduction(self) -> bool {
        matches!(self, Opcode::Dot | Opcode::Nrm2)
    }
}

/// Synthetic operand placement used by microbenchmark kernels: whole rows
/// across an explicit bank set, banks interleaved per block so streams
/// alternate bank groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSpan {
    pub banks: Vec<u8>,
    pub row0: u32,
    pub nrows: u32,
    pub columns: u16,
    /// Walk positions skipped before the first block (sub-instruction
    /// windows into a larger span).
    pub skip_blocks: u64,
    /// Synthetic physical base for the functional store (outside the
    /// mapped capacity, so it never collides with allocator traffic).
    pub paddr_base: u64,
}

/// One operand of an instruction.
///
/// Allocator-backed operands (`raw == None`) denote: the target rank's
/// local blocks of the surrounding system row, starting at `base`, taken
/// in ascending physical order. `packed` operands hold rank-private
/// logical vectors (element 16k+s of the logical vector lives in slot s of
/// the k-th local block); unpacked operands are shards of a globally
/// interleaved vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OperandDesc {
    pub base: PhysicalAddress,
    pub packed: bool,
    /// Logical element index of `base` within the operation's span
    /// (GEMV matrix operands; zero elsewhere).
    pub elem0: u32,
    pub raw: Option<RawSpan>,
}

impl OperandDesc {
    pub fn sharded(base: PhysicalAddress) -> Self {
        OperandDesc {
            base,
            packed: false,
            elem0: 0,
            raw: None,
        }
    }

    pub fn packed(base: PhysicalAddress) -> Self {
        OperandDesc {
            base,
            packed: true,
            elem0: 0,
            raw: None,
        }
    }
}

/// Coarse-grain vector operation bound to one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct NdaInstruction {
    pub opcode: Opcode,
    pub operands: Vec<OperandDesc>,
    /// Local element count (elementwise / reductions) or column-chunk
    /// width (GEMV).
    pub n_elems: u32,
    /// GEMV only: rows of the local tile.
    pub rows: u16,
    /// GEMV only: elements per full matrix row (chunked operations walk a
    /// column window of each row).
    pub row_stride: u32,
    /// GEMV only: first column of this chunk.
    pub col0: u32,
    /// Protection limit on accessed element count.
    pub bound: u32,
    pub alpha: f32,
    pub beta: f32,
    pub gamma: f32,
    /// GEMV column-chunk continuation: read and add to existing partials.
    pub accumulate: bool,
    /// (channel, rank) executing this instruction.
    pub target: (u8, u8),
}

impl NdaInstruction {
    pub fn validate(&self, map: &MappingConfig) -> Result<(), LaunchError> {
        if self.operands.len() != self.opcode.operand_count() {
            return Err(LaunchError::Invalid(format!(
                "{:?} takes {} operands, got {}",
                self.opcode,
                self.opcode.operand_count(),
                self.operands.len()
            )));
        }
        if self.n_elems == 0 {
            return Err(LaunchError::Invalid("empty vector".into()));
        }
        if self.n_elems > self.bound {
            return Err(LaunchError::BoundsViolation {
                n: self.n_elems,
                bound: self.bound,
            });
        }
        if self.opcode == Opcode::Gemv {
            if self.n_elems % 16 != 0 || self.col0 % 16 != 0 || self.row_stride % 16 != 0 {
                return Err(LaunchError::Invalid(
                    "GEMV columns must be 16-aligned".into(),
                ));
            }
            if self.rows == 0 {
                return Err(LaunchError::Invalid("GEMV needs at least one row".into()));
            }
            if self.n_elems / 16 > 128 {
                return Err(LaunchError::Invalid(
                    "GEMV column chunk exceeds scratchpad capacity".into(),
                ));
            }
            if self.col0 + self.n_elems > self.row_stride {
                return Err(LaunchError::Invalid("GEMV chunk exceeds row".into()));
            }
        }
        // All allocator-backed operand bases must land in the target rank.
        for (i, op) in self.operands.iter().enumerate() {
            if op.raw.is_some() {
                continue;
            }
            let d = map.map_physical(op.base)?;
            if d.rank_id() != self.target {
                return Err(LaunchError::LocalityViolation(format!(
                    "operand {i} base {:#x} maps to rank {:?}, instruction targets {:?}",
                    op.base.0,
                    d.rank_id(),
                    self.target
                )));
            }
        }
        Ok(())
    }

    /// Packs the instruction into its fixed 40-byte microcode image, the
    /// form stored per rank by the host-side controller and shipped in the
    /// launch packet.
    pub fn encode_image(&self) -> [u8; 40] {
        let mut img = [0u8; 40];
        img[0] = self.opcode.as_u8();
        img[1] = (self.operands.len() as u8) | (u8::from(self.accumulate) << 4);
        img[2..4].copy_from_slice(&self.rows.to_le_bytes());
        img[4..8].copy_from_slice(&self.n_elems.to_le_bytes());
        img[8..12].copy_from_slice(&self.bound.to_le_bytes());
        img[12..16].copy_from_slice(&self.alpha.to_le_bytes());
        img[16..20].copy_from_slice(&self.beta.to_le_bytes());
        img[20..24].copy_from_slice(&self.gamma.to_le_bytes());
        for (i, op) in self.operands.iter().enumerate().take(4) {
            let slot = 24 + i * 4;
            let word = match &op.raw {
                None => (op.base.0 >> 6) as u32,
                // Raw spans encode their walk parameters instead of a base.
                Some(r) => {
                    (r.banks.first().copied().unwrap_or(0) as u32)
                        | ((r.banks.len() as u32) << 8)
                        | ((r.row0 & 0xffff) << 16)
                }
            };
            img[slot..slot + 4].copy_from_slice(&word.to_le_bytes());
        }
        img
    }
}

/// Everything delivered by one launch-packet transmission on a channel.
#[derive(Debug, Clone)]
pub struct LaunchPacket {
    /// (ticket, instruction, per-instruction RNG seed).
    pub instrs: Vec<(u64, NdaInstruction, u32)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::MapMode;

    fn map() -> MappingConfig {
        MappingConfig::default_for(2, 2, 16, 2, 8192, 128, 1, MapMode::Baseline).unwrap()
    }

    fn rank_of(map: &MappingConfig, p: u64) -> (u8, u8) {
        map.map_physical(PhysicalAddress(p)).unwrap().rank_id()
    }

    #[test]
    fn image_is_exactly_forty_bytes() {
        let m = map();
        let instr = NdaInstruction {
            opcode: Opcode::Axpy,
            operands: vec![
                OperandDesc::sharded(PhysicalAddress(0)),
                OperandDesc::sharded(PhysicalAddress(64)),
            ],
            n_elems: 256,
            rows: 0,
            row_stride: 0,
            col0: 0,
            bound: 256,
            alpha: 2.0,
            beta: 0.0,
            gamma: 0.0,
            accumulate: false,
            target: rank_of(&m, 0),
        };
        let img = instr.encode_image();
        assert_eq!(img.len(), 40);
        assert_eq!(img[0], Opcode::Axpy.as_u8());
    }

    #[test]
    fn locality_and_bounds_checked() {
        let m = map();
        // Find two block addresses in different ranks.
        let base0 = PhysicalAddress(0);
        let r0 = rank_of(&m, 0);
        let mut other = None;
        for b in 1..4096u64 {
            if rank_of(&m, b * 64) != r0 {
                other = Some(PhysicalAddress(b * 64));
                break;
            }
        }
        let bad = NdaInstruction {
            opcode: Opcode::Axpy,
            operands: vec![OperandDesc::sharded(base0), OperandDesc::sharded(other.unwrap())],
            n_elems: 16,
            rows: 0,
            row_stride: 0,
            col0: 0,
            bound: 16,
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            accumulate: false,
            target: r0,
        };
        assert!(matches!(
            bad.validate(&m),
            Err(LaunchError::LocalityViolation(_))
        ));

        let over = NdaInstruction {
            n_elems: 32,
            bound: 16,
            operands: vec![OperandDesc::sharded(base0), OperandDesc::sharded(base0)],
            ..bad
        };
        assert!(matches!(
            over.validate(&m),
            Err(LaunchError::BoundsViolation { .. })
        ));
    }
}

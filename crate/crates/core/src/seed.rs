//! Master-seed fan-out.
//!
//! Every stage of a run draws its randomness from
//! `splitmix64(master ^ stage_tag)`, where the tag is a fixed constant per
//! stage. Changing one stage's settings never perturbs another stage's
//! random stream.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    SourceInit,
    SourceTrain,
    Centroids,
    Adapt,
    TeacherStudent,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Data => 0x6461_7461,
            Stage::SourceInit => 0x7372_6369,
            Stage::SourceTrain => 0x7372_6374,
            Stage::Centroids => 0x6365_6e74,
            Stage::Adapt => 0x6164_6170,
            Stage::TeacherStudent => 0x7473_6c72,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stage_seed(master: u64, stage: Stage) -> u64 {
    splitmix64(master ^ stage.tag())
}

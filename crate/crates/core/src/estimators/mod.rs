//! Trainable demixers: SlowFlow, SlowVAE, PM-VAE and the PCL baseline.

mod checkpoint;
mod flow;
mod mlp;
mod pcl;
mod train;
mod vae;

pub use checkpoint::{
    decode_tensors, encode_tensors, load_checkpoint, save_checkpoint, Manifest, TensorEntry,
    TrainedModel, MANIFEST_FILE, TENSOR_FILE, TENSOR_MAGIC, TENSOR_VERSION,
};
pub use flow::{
    slowflow_nll, slowflow_nll_value, train_slowflow, FlowConfig, FlowKind, FlowModel,
    FlowObjective,
};
pub use mlp::{Activation, Mlp};
pub use pcl::{pcl_accuracy, pcl_loss, pcl_train, random_perm, PclConfig, PclModel, PCL_MIN_PAIRS};
pub use train::{LogEntry, LossTerms, TrainConfig, TrainLog};
pub use vae::{
    latent_stats, pmvae_loss, slowvae_loss, train_slowvae, EncoderArch, LatentStats,
    TransitionPrior, VaeConfig, VaeModel, VaeNoise, VaeObjective, VaeTerms,
};

#[cfg(test)]
mod tests;

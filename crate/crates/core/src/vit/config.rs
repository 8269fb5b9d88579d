use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a vision transformer with one class token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    pub num_classes: usize,
}

impl Default for VitConfig {
    /// 64×64 images, 8×8 patches (65 tokens), 4 layers of 4 heads.
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            layers: 4,
            heads: 4,
            embed_dim: 32,
            mlp_dim: 64,
            num_classes: 5,
        }
    }
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("layers", self.layers),
            ("heads", self.heads),
            ("embed_dim", self.embed_dim),
            ("mlp_dim", self.mlp_dim),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::arg(format!("{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::arg(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::arg(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Patches per image side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patch tokens plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_65_tokens() {
        let c = VitConfig::default();
        c.validate().unwrap();
        assert_eq!(c.num_tokens(), 65);
        assert_eq!(c.head_dim(), 8);
    }

    #[test]
    fn rejects_indivisible_shapes() {
        for c in [
            VitConfig {
                patch_size: 7,
                ..VitConfig::default()
            },
            VitConfig {
                heads: 3,
                ..VitConfig::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}

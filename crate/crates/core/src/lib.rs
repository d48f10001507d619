//! Simulation and analysis toolkit for online gradient learning of single- and
//! multi-index targets in high dimension.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: counter-based Gaussian streams, sphere geometry, overlap metrics.
//! * [`targets`]: Hermite polynomials, link functions and activations.
//! * [`quadrature`] and [`exponents`]: Gaussian quadrature and the information /
//!   polynomial generative exponent oracles.
//! * [`dynamics`]: the two-layer learner and the two-step (extragradient,
//!   SAM, lookahead) optimizer family, plus the population drift functions.
//! * [`experiments`]: trajectories, hitting times, dimension sweeps and presets.

/// Enum with a stable string id per variant, parsed from and serialized as
/// that id.
macro_rules! id_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $id:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn id(&self) -> &'static str {
                match self {
                    $($name::$variant => $id),+
                }
            }
        }

        impl std::str::FromStr for $name {
            type Err = $crate::Error;

            fn from_str(s: &str) -> $crate::Result<Self> {
                match s.trim() {
                    $($id $(| $alias)* => Ok($name::$variant),)+
                    other => Err($crate::Error::UnknownId { kind: $kind, id: other.to_string() }),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.id())
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.id())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = <String as serde::Deserialize>::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod linalg;
pub mod quadrature;
pub mod targets;

pub use error::{Error, Result};

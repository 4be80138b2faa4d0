//! Security suite selector and the baseline/hardened profile switch.

use std::fmt;
use std::str::FromStr;

use crate::crypto::CipherFunction;
use crate::frame::SecurityLevel;

/// Which rule set is in force: the standard as written, or the standard
/// plus the recommended improvements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Profile {
    #[default]
    Baseline,
    Hardened,
}

impl Profile {
    pub const BOTH: [Profile; 2] = [Profile::Baseline, Profile::Hardened];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Baseline => "baseline",
            Profile::Hardened => "hardened",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Profile::Baseline),
            "hardened" => Ok(Profile::Hardened),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

/// The five association protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssocProtocol {
    /// I: master key provisioned out of band.
    PreSharedMk,
    /// II: bare ECDH.
    Unauthenticated,
    /// III: responder's static public key is pre-provisioned and never sent.
    PublicKeyHidden,
    /// IV: ECDH with password-blinded public points.
    PasswordAuthenticated,
    /// V: ECDH with out-of-band comparison of a 5-digit check value.
    DisplayAuthenticated,
}

impl AssocProtocol {
    pub const ALL: [AssocProtocol; 5] = [
        AssocProtocol::PreSharedMk,
        AssocProtocol::Unauthenticated,
        AssocProtocol::PublicKeyHidden,
        AssocProtocol::PasswordAuthenticated,
        AssocProtocol::DisplayAuthenticated,
    ];

    pub fn numeral(self) -> &'static str {
        match self {
            AssocProtocol::PreSharedMk => "I",
            AssocProtocol::Unauthenticated => "II",
            AssocProtocol::PublicKeyHidden => "III",
            AssocProtocol::PasswordAuthenticated => "IV",
            AssocProtocol::DisplayAuthenticated => "V",
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get((v as usize).checked_sub(1)?).copied()
    }

    pub fn uses_ecdh(self) -> bool {
        self != AssocProtocol::PreSharedMk
    }

    /// Whether an honest completion authenticates both parties to each other.
    pub fn mutually_authenticating(self) -> bool {
        self != AssocProtocol::Unauthenticated
    }
}

impl fmt::Display for AssocProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.numeral())
    }
}

impl FromStr for AssocProtocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        Ok(match t.as_str() {
            "i" | "1" | "preshared" | "pre-shared" | "psk" => AssocProtocol::PreSharedMk,
            "ii" | "2" | "unauthenticated" | "unauth" => AssocProtocol::Unauthenticated,
            "iii" | "3" | "public-key-hidden" | "pkh" => AssocProtocol::PublicKeyHidden,
            "iv" | "4" | "password" => AssocProtocol::PasswordAuthenticated,
            "v" | "5" | "display" => AssocProtocol::DisplayAuthenticated,
            _ => return Err(format!("unknown association protocol {s:?}")),
        })
    }
}

pub const SSS_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecuritySuiteSelector {
    pub level: SecurityLevel,
    pub protocol: AssocProtocol,
    pub cipher: CipherFunction,
    pub auth_control_frames: bool,
}

impl SecuritySuiteSelector {
    pub fn new(level: SecurityLevel, protocol: AssocProtocol, cipher: CipherFunction) -> Self {
        Self { level, protocol, cipher, auth_control_frames: level.is_secured() }
    }

    /// 256-bit ciphers exist only in the hardened profile.
    pub fn permitted_under(&self, profile: Profile) -> bool {
        self.cipher != CipherFunction::Aes256Ccm || profile == Profile::Hardened
    }

    pub fn to_bytes(&self) -> [u8; SSS_LEN] {
        [
            self.level.as_u8(),
            self.protocol.as_u8(),
            self.cipher.as_u8(),
            self.auth_control_frames as u8,
        ]
    }

    pub fn from_bytes(b: &[u8; SSS_LEN]) -> Option<Self> {
        Some(Self {
            level: SecurityLevel::from_u8(b[0])?,
            protocol: AssocProtocol::from_u8(b[1])?,
            cipher: CipherFunction::from_u8(b[2])?,
            auth_control_frames: match b[3] {
                0 => false,
                1 => true,
                _ => return None,
            },
        })
    }
}

impl fmt::Display for SecuritySuiteSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.level, self.protocol, self.cipher)?;
        if self.auth_control_frames {
            f.write_str("/ctl-auth")?;
        }
        Ok(())
    }
}

//! 48-bit link-layer addresses and their 24-bit organizational prefixes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MULTICAST_BIT: u8 = 0x01;
const LOCAL_BIT: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MacParseError {
    #[error("expected 12 hex digits, found {found} at position {position}")]
    Length { found: usize, position: usize },
    #[error("invalid hex character {ch:?} at position {position}")]
    InvalidHex { ch: char, position: usize },
    #[error("unexpected separator {ch:?} at position {position}")]
    Separator { ch: char, position: usize },
}

/// A BSSID or any other EUI-48 address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddress([u8; 6]);

impl MacAddress {
    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }

    pub fn from_parts(oui: Oui, suffix: u32) -> Self {
        let [a, b, c] = oui.octets();
        let s = suffix.to_be_bytes();
        MacAddress([a, b, c, s[1], s[2], s[3]])
    }

    pub fn from_u64(value: u64) -> Self {
        let b = value.to_be_bytes();
        MacAddress([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn to_u64(self) -> u64 {
        let o = self.0;
        u64::from_be_bytes([0, 0, o[0], o[1], o[2], o[3], o[4], o[5]])
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }

    pub fn oui(&self) -> Oui {
        Oui([self.0[0], self.0[1], self.0[2]])
    }

    /// Low 24 bits, the part an organization assigns itself.
    pub fn suffix(&self) -> u32 {
        u32::from_be_bytes([0, self.0[3], self.0[4], self.0[5]])
    }

    pub fn is_multicast(&self) -> bool {
        self.0[0] & MULTICAST_BIT != 0
    }

    pub fn is_locally_administered(&self) -> bool {
        self.0[0] & LOCAL_BIT != 0
    }

    /// Vendor-lookup key: the prefix with the U/L bit cleared.
    pub fn normalized_oui(&self) -> Oui {
        self.oui().with_local_bit(false)
    }

    pub fn with_local_bit(self, flag: bool) -> Self {
        let mut o = self.0;
        o[0] = if flag { o[0] | LOCAL_BIT } else { o[0] & !LOCAL_BIT };
        MacAddress(o)
    }
}

pub fn parse_mac(text: &str) -> Result<MacAddress, MacParseError> {
    text.parse()
}

impl FromStr for MacAddress {
    type Err = MacParseError;

    /// Accepts `aa:bb:cc:dd:ee:ff`, `aa-bb-cc-dd-ee-ff` or `aabbccddeeff`,
    /// in any case. Separators may not be mixed.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = text.chars().collect();
        let separated = chars.len() > 2 && matches!(chars[2], ':' | '-');
        let separator = if separated { Some(chars[2]) } else { None };
        let mut octets = [0u8; 6];
        let mut digits = 0usize;
        for (position, &ch) in chars.iter().enumerate() {
            let separator_slot = separated && position % 3 == 2;
            if separator_slot {
                if Some(ch) != separator {
                    return Err(if ch.is_ascii_hexdigit() || ch == ':' || ch == '-' {
                        MacParseError::Separator { ch, position }
                    } else {
                        MacParseError::InvalidHex { ch, position }
                    });
                }
                continue;
            }
            let v = ch.to_digit(16).ok_or(if ch == ':' || ch == '-' {
                MacParseError::Separator { ch, position }
            } else {
                MacParseError::InvalidHex { ch, position }
            })?;
            if digits == 12 {
                return Err(MacParseError::Length { found: digits + 1, position });
            }
            octets[digits / 2] = (octets[digits / 2] << 4) | v as u8;
            digits += 1;
        }
        let trailing_separator = separated && chars.len() % 3 == 0;
        if digits != 12 || trailing_separator {
            return Err(MacParseError::Length { found: digits, position: chars.len() });
        }
        Ok(MacAddress(octets))
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The high 24 bits of a [`MacAddress`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Oui([u8; 3]);

impl Oui {
    pub const fn new(octets: [u8; 3]) -> Self {
        Oui(octets)
    }

    pub const fn octets(&self) -> [u8; 3] {
        self.0
    }

    pub fn to_u32(self) -> u32 {
        u32::from_be_bytes([0, self.0[0], self.0[1], self.0[2]])
    }

    pub fn is_multicast(&self) -> bool {
        self.0[0] & MULTICAST_BIT != 0
    }

    pub fn is_locally_administered(&self) -> bool {
        self.0[0] & LOCAL_BIT != 0
    }

    /// Returns the prefix with only the U/L bit changed to `flag`.
    pub fn with_local_bit(self, flag: bool) -> Self {
        let mut o = self.0;
        o[0] = if flag { o[0] | LOCAL_BIT } else { o[0] & !LOCAL_BIT };
        Oui(o)
    }

    pub fn normalized(self) -> Self {
        self.with_local_bit(false)
    }
}

impl FromStr for Oui {
    type Err = MacParseError;

    /// Accepts `aa:bb:cc`, `aa-bb-cc` or `aabbcc`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let hex: String = text.chars().filter(|c| *c != ':' && *c != '-').collect();
        if hex.len() != 6 {
            return Err(MacParseError::Length { found: hex.len(), position: text.len() });
        }
        let mut out = [0u8; 3];
        for (i, ch) in hex.chars().enumerate() {
            let v = ch.to_digit(16).ok_or(MacParseError::InvalidHex { ch, position: i })?;
            out[i / 2] = (out[i / 2] << 4) | v as u8;
        }
        Ok(Oui(out))
    }
}

impl fmt::Display for Oui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}:{:02x}:{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

impl fmt::Debug for Oui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Oui({self})")
    }
}

impl Serialize for Oui {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Oui {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

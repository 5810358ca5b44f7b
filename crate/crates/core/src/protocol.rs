//! JSON wire format shared by the simulator and the crawler.
//!
//! ```text
//! POST /v1/locate
//!   request:  {"bssids":["aa:bb:cc:dd:ee:ff", ...]}                 1..=100 items
//!   response: {"requested":[{"bssid":"..","lat":N,"lon":N}, ...],
//!              "nearby":[{"bssid":"..","lat":N,"lon":N}, ...]}
//! ```
//!
//! Coordinates are written as fixed-point numbers with 8 decimals. A
//! requested BSSID the service does not know comes back at (-180, -180).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::future::Future;

use serde_json::Value;
use thiserror::Error;

use crate::geo::{round8, GeoPosition};
use crate::mac::MacAddress;

/// Most BSSIDs one locate request may carry.
pub const MAX_BATCH: usize = 100;
/// Most nearby records returned per requested BSSID that was found.
pub const DEFAULT_NEARBY_CAP: usize = 400;
pub const LOCATE_PATH: &str = "/v1/locate";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (at {pointer})")]
pub struct DecodeError {
    /// JSON pointer to the offending value.
    pub pointer: String,
    pub message: String,
}

impl DecodeError {
    fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        DecodeError { pointer: pointer.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("a locate request needs at least one BSSID")]
    Empty,
    #[error("a locate request carries at most {MAX_BATCH} BSSIDs, got {0}")]
    TooMany(usize),
    #[error("duplicate BSSID {0} in one request")]
    Duplicate(MacAddress),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocateRequest {
    bssids: Vec<MacAddress>,
}

impl LocateRequest {
    pub fn new(bssids: Vec<MacAddress>) -> Result<Self, RequestError> {
        if bssids.is_empty() {
            return Err(RequestError::Empty);
        }
        if bssids.len() > MAX_BATCH {
            return Err(RequestError::TooMany(bssids.len()));
        }
        let mut seen = HashSet::with_capacity(bssids.len());
        if let Some(dup) = bssids.iter().find(|b| !seen.insert(**b)) {
            return Err(RequestError::Duplicate(*dup));
        }
        Ok(LocateRequest { bssids })
    }

    pub fn bssids(&self) -> &[MacAddress] {
        &self.bssids
    }

    pub fn len(&self) -> usize {
        self.bssids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bssids.is_empty()
    }
}

/// One BSSID and where the service places it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WpsRecord {
    pub bssid: MacAddress,
    pub pos: GeoPosition,
}

impl WpsRecord {
    pub fn new(bssid: MacAddress, pos: GeoPosition) -> Self {
        WpsRecord { bssid, pos: if pos.is_sentinel() { pos } else { pos.rounded() } }
    }

    pub fn not_found(bssid: MacAddress) -> Self {
        WpsRecord { bssid, pos: GeoPosition::NOT_FOUND }
    }

    pub fn is_found(&self) -> bool {
        !self.pos.is_sentinel()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocateResponse {
    /// One record per requested BSSID, in request order.
    pub requested: Vec<WpsRecord>,
    /// Extra geolocated BSSIDs near the ones found; never sentinels.
    pub nearby: Vec<WpsRecord>,
}

impl LocateResponse {
    pub fn found(&self) -> impl Iterator<Item = &WpsRecord> {
        self.requested.iter().filter(|r| r.is_found())
    }

    /// Checks the response against the request that produced it.
    pub fn check_alignment(&self, request: &LocateRequest) -> Result<(), DecodeError> {
        if self.requested.len() != request.len() {
            return Err(DecodeError::at(
                "/requested",
                format!("expected {} records, got {}", request.len(), self.requested.len()),
            ));
        }
        for (i, (rec, asked)) in self.requested.iter().zip(request.bssids()).enumerate() {
            if rec.bssid != *asked {
                return Err(DecodeError::at(
                    format!("/requested/{i}/bssid"),
                    format!("expected {asked}, got {}", rec.bssid),
                ));
            }
        }
        Ok(())
    }
}

pub fn encode_request(req: &LocateRequest) -> String {
    let mut out = String::with_capacity(20 + 20 * req.len());
    out.push_str("{\"bssids\":[");
    for (i, b) in req.bssids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "\"{b}\"");
    }
    out.push_str("]}");
    out
}

pub fn decode_request(body: &[u8]) -> Result<LocateRequest, DecodeError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| DecodeError::at("", e.to_string()))?;
    let list = value
        .get("bssids")
        .ok_or_else(|| DecodeError::at("/bssids", "missing field"))?
        .as_array()
        .ok_or_else(|| DecodeError::at("/bssids", "expected an array"))?;
    let mut bssids = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        bssids.push(mac_at(item, &format!("/bssids/{i}"))?);
    }
    LocateRequest::new(bssids).map_err(|e| DecodeError::at("/bssids", e.to_string()))
}

pub fn encode_response(resp: &LocateResponse) -> String {
    let mut out = String::with_capacity(64 * (resp.requested.len() + resp.nearby.len()) + 32);
    out.push_str("{\"requested\":[");
    write_records(&mut out, &resp.requested);
    out.push_str("],\"nearby\":[");
    write_records(&mut out, &resp.nearby);
    out.push_str("]}");
    out
}

fn write_records(out: &mut String, records: &[WpsRecord]) {
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"bssid\":\"{}\",\"lat\":{:.8},\"lon\":{:.8}}}",
            r.bssid, r.pos.lat, r.pos.lon
        );
    }
}

pub fn decode_response(body: &[u8]) -> Result<LocateResponse, DecodeError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| DecodeError::at("", e.to_string()))?;
    let requested = records_at(&value, "requested", true)?;
    let nearby = records_at(&value, "nearby", false)?;
    Ok(LocateResponse { requested, nearby })
}

fn records_at(value: &Value, field: &str, allow_sentinel: bool) -> Result<Vec<WpsRecord>, DecodeError> {
    let pointer = format!("/{field}");
    let list = value
        .get(field)
        .ok_or_else(|| DecodeError::at(&pointer, "missing field"))?
        .as_array()
        .ok_or_else(|| DecodeError::at(&pointer, "expected an array"))?;
    let mut out = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        let base = format!("{pointer}/{i}");
        let bssid = mac_at(item.get("bssid").unwrap_or(&Value::Null), &format!("{base}/bssid"))?;
        let lat = number_at(item, "lat", &base)?;
        let lon = number_at(item, "lon", &base)?;
        let pos = GeoPosition { lat: round8(lat), lon: round8(lon) };
        if pos.is_sentinel() {
            if !allow_sentinel {
                return Err(DecodeError::at(&base, "not-found sentinel in nearby list"));
            }
        } else if !pos.is_valid() {
            return Err(DecodeError::at(&base, format!("coordinates out of range: {lat}, {lon}")));
        }
        out.push(WpsRecord { bssid, pos });
    }
    Ok(out)
}

fn mac_at(item: &Value, pointer: &str) -> Result<MacAddress, DecodeError> {
    item.as_str()
        .ok_or_else(|| DecodeError::at(pointer, "expected a BSSID string"))?
        .parse()
        .map_err(|e: crate::mac::MacParseError| DecodeError::at(pointer, e.to_string()))
}

fn number_at(item: &Value, field: &str, base: &str) -> Result<f64, DecodeError> {
    item.get(field)
        .and_then(Value::as_f64)
        .ok_or_else(|| DecodeError::at(format!("{base}/{field}"), "expected a number"))
}

/// Splits `bssids` into request-sized chunks, preserving order.
pub fn chunk(bssids: &[MacAddress], batch_size: usize) -> Vec<Vec<MacAddress>> {
    let size = batch_size.clamp(1, MAX_BATCH);
    bssids.chunks(size).map(<[MacAddress]>::to_vec).collect()
}

/// Why a single request attempt failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("rate limited by server")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("bad response: {0}")]
    Decode(#[from] DecodeError),
    #[error("invalid request: {0}")]
    Request(#[from] RequestError),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::RateLimited { .. } | TransportError::Network(_) => true,
            TransportError::Status { status, .. } => *status >= 500,
            TransportError::Decode(_) | TransportError::Request(_) => false,
        }
    }
}

/// The result of one chunk of a larger locate call.
#[derive(Debug, Clone)]
pub struct ChunkOutcome {
    /// Position of this chunk in the caller's input.
    pub index: usize,
    pub bssids: Vec<MacAddress>,
    pub attempts: u32,
    pub result: Result<LocateResponse, TransportError>,
}

/// Anything that can geolocate a list of BSSIDs, chunking as needed.
///
/// Outcomes carry their chunk index and may be returned in any order.
pub trait Locator {
    fn locate_all(&self, bssids: Vec<MacAddress>) -> impl Future<Output = Vec<ChunkOutcome>>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    #[test]
    fn single_bssid_request_bytes() {
        let req = LocateRequest::new(vec![mac("08:4a:93:2f:b1:07")]).unwrap();
        assert_eq!(encode_request(&req), r#"{"bssids":["08:4a:93:2f:b1:07"]}"#);
        assert_eq!(decode_request(encode_request(&req).as_bytes()).unwrap(), req);
    }

    #[test]
    fn request_limits() {
        assert_eq!(LocateRequest::new(vec![]), Err(RequestError::Empty));
        let many: Vec<_> = (0..101u64).map(MacAddress::from_u64).collect();
        assert_eq!(LocateRequest::new(many.clone()), Err(RequestError::TooMany(101)));
        assert!(LocateRequest::new(many[..100].to_vec()).is_ok());
        let a = mac("00:00:00:00:00:01");
        assert_eq!(LocateRequest::new(vec![a, a]), Err(RequestError::Duplicate(a)));
    }

    #[test]
    fn unknown_bssid_uses_sentinel() {
        let resp = LocateResponse {
            requested: vec![WpsRecord::not_found(mac("aa:bb:cc:dd:ee:ff"))],
            nearby: vec![],
        };
        let text = encode_response(&resp);
        assert_eq!(
            text,
            r#"{"requested":[{"bssid":"aa:bb:cc:dd:ee:ff","lat":-180.00000000,"lon":-180.00000000}],"nearby":[]}"#
        );
        let back = decode_response(text.as_bytes()).unwrap();
        assert!(back.requested[0].pos.is_sentinel());
    }

    #[test]
    fn decode_errors_point_at_fault() {
        let err = decode_request(br#"{"bssids":["08:4a:93:2f:b1:07","nope"]}"#).unwrap_err();
        assert_eq!(err.pointer, "/bssids/1");
        let err = decode_request(br#"{"macs":[]}"#).unwrap_err();
        assert_eq!(err.pointer, "/bssids");
        let err = decode_response(br#"{"requested":[{"bssid":"08:4a:93:2f:b1:07","lat":1.0}],"nearby":[]}"#)
            .unwrap_err();
        assert_eq!(err.pointer, "/requested/0/lon");
        let err = decode_response(
            br#"{"requested":[],"nearby":[{"bssid":"08:4a:93:2f:b1:07","lat":-180,"lon":-180}]}"#,
        )
        .unwrap_err();
        assert_eq!(err.pointer, "/nearby/0");
        let err = decode_response(br#"{"requested":[{"bssid":"08:4a:93:2f:b1:07","lat":95,"lon":0}],"nearby":[]}"#)
            .unwrap_err();
        assert_eq!(err.pointer, "/requested/0");
        assert!(decode_response(b"not json").is_err());
    }

    #[test]
    fn chunk_arithmetic() {
        let list: Vec<_> = (0..250u64).map(MacAddress::from_u64).collect();
        let sizes: Vec<_> = chunk(&list, 100).iter().map(Vec::len).collect();
        assert_eq!(sizes, [100, 100, 50]);
        assert_eq!(chunk(&list, 500).len(), 3, "batch size is capped at the protocol maximum");
        assert!(chunk(&[], 100).is_empty());
    }

    #[test]
    fn alignment_check() {
        let req = LocateRequest::new(vec![mac("00:00:00:00:00:01"), mac("00:00:00:00:00:02")]).unwrap();
        let resp = LocateResponse {
            requested: vec![
                WpsRecord::not_found(mac("00:00:00:00:00:02")),
                WpsRecord::not_found(mac("00:00:00:00:00:01")),
            ],
            nearby: vec![],
        };
        assert_eq!(resp.check_alignment(&req).unwrap_err().pointer, "/requested/0/bssid");
    }

    fn record(allow_sentinel: bool) -> impl Strategy<Value = WpsRecord> {
        (any::<u64>(), -90.0f64..=90.0, -180.0f64..=180.0, any::<bool>()).prop_map(
            move |(m, lat, lon, sentinel)| {
                let bssid = MacAddress::from_u64(m & 0xffff_ffff_ffff);
                if sentinel && allow_sentinel {
                    WpsRecord::not_found(bssid)
                } else {
                    WpsRecord::new(bssid, GeoPosition { lat, lon })
                }
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn request_round_trip(raw in proptest::collection::hash_set(0u64..(1 << 48), 1..=100)) {
            let req = LocateRequest::new(raw.into_iter().map(MacAddress::from_u64).collect()).unwrap();
            let bytes = encode_request(&req);
            let back = decode_request(bytes.as_bytes()).unwrap();
            prop_assert_eq!(&back, &req);
            prop_assert_eq!(encode_request(&back), bytes);
        }

        #[test]
        fn response_round_trip(
            requested in proptest::collection::vec(record(true), 0..30),
            nearby in proptest::collection::vec(record(false), 0..60),
        ) {
            let resp = LocateResponse { requested, nearby };
            let bytes = encode_response(&resp);
            let back = decode_response(bytes.as_bytes()).unwrap();
            prop_assert_eq!(&back, &resp);
            prop_assert_eq!(encode_response(&back), bytes);
        }
    }
}

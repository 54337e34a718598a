//! Location normalization against a Nominatim-compatible geocoding service.
//!
//! Location arguments arrive as free-form comma-separated hierarchies. Equality
//! on raw strings is too brittle ("Mosul - Old City" vs "Mosul, Old City"), so
//! locations are resolved to canonical places and compared by place id. Every
//! lookup is cached persistently; with a warm cache the whole pipeline runs
//! offline and deterministically. Live lookups are throttled to one request
//! per second.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionLevel {
    Country,
    Region,
    County,
    District,
    City,
    Neighborhood,
}

/// A location argument resolved to a canonical place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedLocation {
    /// Canonical geographic identifier (`osm:<place_id>`); empty for
    /// unresolved fallbacks.
    pub place_id: String,
    /// Place names from the most specific kept level up to the country.
    pub display_hierarchy: Vec<String>,
    pub country: String,
    pub resolution_level: ResolutionLevel,
    /// False when the geocoder had no match and the location degraded to a
    /// country-level fallback.
    pub resolved: bool,
    /// Original input address, kept for fallback string matching.
    pub source_address: String,
}

/// True iff both sides resolve to the same canonical place. When either side
/// is an unresolved fallback the comparison degrades to case-insensitive
/// country and address equality.
pub fn locations_match(a: &NormalizedLocation, b: &NormalizedLocation) -> bool {
    if a.resolved && b.resolved {
        return a.place_id == b.place_id;
    }
    eq_ci(&a.country, &b.country) && eq_ci(&a.source_address, &b.source_address)
}

fn eq_ci(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("cache I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("both country and address are empty")]
    EmptyInput,
    #[error("geocoding service unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: usize, message: String },
}

pub const GEO_CACHE_VERSION: u32 = 1;

/// Persistent map from final query string to the raw service response.
#[derive(Debug, Serialize, Deserialize)]
pub struct GeoCache {
    pub version: u32,
    pub entries: BTreeMap<String, Value>,
}

impl Default for GeoCache {
    fn default() -> Self {
        GeoCache { version: GEO_CACHE_VERSION, entries: BTreeMap::new() }
    }
}

impl GeoCache {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeoError> {
        let raw = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }
}

/// Injected clock so the rate limiter is testable without real sleeps.
pub trait Clock: Send + Sync {
    fn now_millis(&self) -> u64;
    fn sleep_millis(&self, ms: u64);
}

pub struct SystemClock {
    origin: std::time::Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: std::time::Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_millis(&self, ms: u64) {
        std::thread::sleep(std::time::Duration::from_millis(ms));
    }
}

/// Serializes live requests to at most one per `min_interval_ms`.
pub struct RateLimiter {
    min_interval_ms: u64,
    last: Mutex<Option<u64>>,
}

impl RateLimiter {
    pub fn new(min_interval_ms: u64) -> Self {
        RateLimiter { min_interval_ms, last: Mutex::new(None) }
    }

    /// Blocks until a request may be issued; returns the effective send time.
    pub fn wait_turn(&self, clock: &dyn Clock) -> u64 {
        let mut last = self.last.lock().unwrap();
        let now = clock.now_millis();
        let send_at = match *last {
            Some(prev) if prev + self.min_interval_ms > now => prev + self.min_interval_ms,
            _ => now,
        };
        if send_at > now {
            clock.sleep_millis(send_at - now);
        }
        *last = Some(send_at);
        send_at
    }
}

pub struct GeocoderConfig {
    /// Base URL of a Nominatim-compatible service; `None` disables live
    /// lookups (cache-only mode).
    pub base_url: Option<String>,
    /// Identification string the service requires on every request.
    pub user_agent: String,
    pub cache_path: Option<PathBuf>,
    pub min_interval_ms: u64,
    pub retries: usize,
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        GeocoderConfig {
            base_url: None,
            user_agent: "aee-geonorm/0.1".into(),
            cache_path: None,
            min_interval_ms: 1000,
            retries: 3,
        }
    }
}

pub struct Geocoder {
    config: GeocoderConfig,
    cache: Mutex<GeoCache>,
    limiter: RateLimiter,
    clock: Box<dyn Clock>,
    client: reqwest::blocking::Client,
}

impl Geocoder {
    pub fn new(config: GeocoderConfig) -> Result<Self, GeoError> {
        let cache = match &config.cache_path {
            Some(path) if path.exists() => GeoCache::load(path)?,
            _ => GeoCache::default(),
        };
        let limiter = RateLimiter::new(config.min_interval_ms);
        Ok(Geocoder {
            config,
            cache: Mutex::new(cache),
            limiter,
            clock: Box::new(SystemClock::default()),
            client: reqwest::blocking::Client::new(),
        })
    }

    #[cfg(test)]
    pub(crate) fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn cache_version(&self) -> u32 {
        self.cache.lock().unwrap().version
    }

    /// Resolve one location argument. The address is queried constrained to
    /// the stated country; a miss degrades to a flagged country-level
    /// fallback instead of failing.
    pub fn normalize_location(
        &self,
        country: &str,
        address: &str,
    ) -> Result<NormalizedLocation, GeoError> {
        let country = country.trim();
        let address = address.trim();
        if country.is_empty() && address.is_empty() {
            return Err(GeoError::EmptyInput);
        }
        let query = build_query(country, address);
        let response = self.lookup(&query)?;
        let fallback = || NormalizedLocation {
            place_id: String::new(),
            display_hierarchy: vec![country.to_string()],
            country: country.to_string(),
            resolution_level: ResolutionLevel::Country,
            resolved: false,
            source_address: address.to_string(),
        };
        let Some(response) = response else {
            log::warn!("geonorm: no cached result for {query:?} in offline mode");
            return Ok(fallback());
        };
        match interpret_response(&response, country, address) {
            Some(normalized) => Ok(normalized),
            None => Ok(fallback()),
        }
    }

    /// Cached raw response for a query, fetching it live when allowed.
    /// `Ok(None)` means offline mode with a cold cache.
    fn lookup(&self, query: &str) -> Result<Option<Value>, GeoError> {
        if let Some(hit) = self.cache.lock().unwrap().entries.get(query) {
            return Ok(Some(hit.clone()));
        }
        let Some(base_url) = &self.config.base_url else {
            return Ok(None);
        };
        let response = self.fetch(base_url, query)?;
        {
            let mut cache = self.cache.lock().unwrap();
            cache.entries.insert(query.to_string(), response.clone());
            if let Some(path) = &self.config.cache_path {
                save_cache_atomic(path, &cache)?;
            }
        }
        Ok(Some(response))
    }

    fn fetch(&self, base_url: &str, query: &str) -> Result<Value, GeoError> {
        let attempts = self.config.retries.max(1);
        let mut message = String::new();
        for attempt in 0..attempts {
            self.limiter.wait_turn(self.clock.as_ref());
            let result = self
                .client
                .get(format!("{}/search", base_url.trim_end_matches('/')))
                .query(&[
                    ("q", query),
                    ("format", "jsonv2"),
                    ("addressdetails", "1"),
                    ("limit", "5"),
                ])
                .header("User-Agent", &self.config.user_agent)
                .send();
            match result {
                Ok(response) if response.status().is_success() => {
                    return response.json().map_err(|e| GeoError::Unreachable {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    });
                }
                Ok(response) => message = format!("service returned {}", response.status()),
                Err(e) => message = e.to_string(),
            }
        }
        Err(GeoError::Unreachable { attempts, message })
    }
}

/// Final query string: the comma-separated address, with the country appended
/// when the address does not already end with it.
pub fn build_query(country: &str, address: &str) -> String {
    if address.is_empty() {
        return country.to_string();
    }
    let ends_with_country = address
        .rsplit(',')
        .next()
        .map(|last| eq_ci(last, country))
        .unwrap_or(false);
    if ends_with_country || country.is_empty() {
        address.to_string()
    } else {
        format!("{address}, {country}")
    }
}

/// Pick the best candidate from a raw search response: the first hit whose
/// country agrees with the requested one.
fn interpret_response(
    response: &Value,
    country: &str,
    source_address: &str,
) -> Option<NormalizedLocation> {
    let candidates = response.as_array()?;
    let candidate = candidates.iter().find(|c| {
        c["address"]["country"]
            .as_str()
            .map(|c2| eq_ci(c2, country) || country.is_empty())
            .unwrap_or(false)
    })?;

    let place_id = candidate["place_id"].as_u64()?;
    let display_name = candidate["display_name"].as_str()?;
    let resolved_country = candidate["address"]["country"].as_str().unwrap_or(country);

    let mut hierarchy: Vec<String> = display_name
        .split(',')
        .map(str::trim)
        .filter(|part| !part.is_empty() && !is_postcode(part))
        .map(String::from)
        .collect();
    match hierarchy.last() {
        Some(last) if eq_ci(last, resolved_country) => {}
        _ => hierarchy.push(resolved_country.to_string()),
    }

    let addresstype = candidate["addresstype"]
        .as_str()
        .or_else(|| candidate["type"].as_str())
        .unwrap_or("");
    Some(NormalizedLocation {
        place_id: format!("osm:{place_id}"),
        display_hierarchy: hierarchy,
        country: resolved_country.to_string(),
        resolution_level: level_for(addresstype),
        resolved: true,
        source_address: source_address.to_string(),
    })
}

fn is_postcode(part: &str) -> bool {
    !part.is_empty() && part.chars().all(|c| c.is_ascii_digit() || c == '-' || c == ' ')
}

fn level_for(addresstype: &str) -> ResolutionLevel {
    match addresstype {
        "country" => ResolutionLevel::Country,
        "state" | "region" | "province" => ResolutionLevel::Region,
        "county" | "state_district" => ResolutionLevel::County,
        "district" | "city_district" | "municipality" | "subdistrict" | "administrative" => {
            ResolutionLevel::District
        }
        "city" | "town" | "village" | "hamlet" => ResolutionLevel::City,
        "suburb" | "neighbourhood" | "quarter" | "residential" => ResolutionLevel::Neighborhood,
        _ => ResolutionLevel::District,
    }
}

fn save_cache_atomic(path: &Path, cache: &GeoCache) -> Result<(), GeoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(cache).expect("cache serializes"))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

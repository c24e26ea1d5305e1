//! Service directory: providers publish priced services, consumers query.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::{AccountId, EntryId, ResourceId};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("resource {0} already has a live {1} entry")]
    Duplicate(ResourceId, String),
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("unknown or withdrawn entry {0}")]
    UnknownEntry(EntryId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceSummary<T> {
    pub base_price: T,
    pub peak_multiplier: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceEntry<T> {
    pub provider_account: AccountId,
    pub resource: ResourceId,
    pub service_type: String,
    pub apps: BTreeSet<String>,
    pub price_summary: PriceSummary<T>,
    pub published_at: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Directory<T> {
    live: BTreeMap<EntryId, ServiceEntry<T>>,
    known_resources: BTreeSet<ResourceId>,
    next_id: usize,
}

impl<T: Scalar> Directory<T> {
    /// Creates a directory that accepts entries for the given resources.
    pub fn new(resources: impl IntoIterator<Item = ResourceId>) -> Self {
        Self {
            live: BTreeMap::new(),
            known_resources: resources.into_iter().collect(),
            next_id: 0,
        }
    }

    /// Allows entries for `resource` from now on.
    pub fn register_resource(&mut self, resource: ResourceId) {
        self.known_resources.insert(resource);
    }

    pub fn publish(&mut self, entry: ServiceEntry<T>) -> Result<EntryId, MarketError> {
        if !self.known_resources.contains(&entry.resource) {
            return Err(MarketError::UnknownResource(entry.resource));
        }
        let dup = self
            .live
            .values()
            .any(|e| e.resource == entry.resource && e.service_type == entry.service_type);
        if dup {
            return Err(MarketError::Duplicate(entry.resource, entry.service_type));
        }
        let id = EntryId(self.next_id);
        self.next_id += 1;
        self.live.insert(id, entry);
        Ok(id)
    }

    pub fn unpublish(&mut self, id: EntryId) -> Result<ServiceEntry<T>, MarketError> {
        self.live.remove(&id).ok_or(MarketError::UnknownEntry(id))
    }

    pub fn get(&self, id: EntryId) -> Option<&ServiceEntry<T>> {
        self.live.get(&id)
    }

    /// Live entries of `service_type`, optionally filtered by hosted app
    /// and a ceiling on base price. Sorted by `(base_price, resource)`.
    pub fn query(&self, service_type: &str, app: Option<&str>, max_base_price: Option<&T>) -> Vec<(EntryId, &ServiceEntry<T>)> {
        let mut out: Vec<_> = self
            .live
            .iter()
            .filter(|(_, e)| e.service_type == service_type)
            .filter(|(_, e)| app.is_none_or(|a| e.apps.contains(a)))
            .filter(|(_, e)| max_base_price.is_none_or(|p| e.price_summary.base_price <= *p))
            .map(|(id, e)| (*id, e))
            .collect();
        out.sort_by(|a, b| {
            a.1.price_summary
                .base_price
                .partial_cmp(&b.1.price_summary.base_price)
                .expect("prices are finite")
                .then(a.1.resource.cmp(&b.1.resource))
        });
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (EntryId, &ServiceEntry<T>)> {
        self.live.iter().map(|(id, e)| (*id, e))
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }
}

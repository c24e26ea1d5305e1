//! Index newtypes. Every id is the declaration-order index of the thing it
//! names, so "lowest id" tie-breaks follow scenario order.

use std::fmt;

macro_rules! index_id {
    ($($(#[$m:meta])* $name:ident),* $(,)?) => {$(
        $(#[$m])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}

index_id!(SiteId, ResourceId, AccountId, JobId, EntryId, NodeId, SessionId, ClusterId);

use thiserror::Error;

/// Everything that can go wrong in the simulated kernel, the key manager,
/// or the per-group heap. Kernel-level variants mirror the errno the real
/// syscalls would return; manager-level variants are library exceptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MpkError {
    #[error("no free protection keys")]
    NoFreeKeys,
    #[error("invalid or unallocated protection key")]
    InvalidKey,
    #[error("page not mapped")]
    UnmappedPage,
    #[error("manager already initialized")]
    AlreadyInitialized,
    #[error("kernel keys unavailable: another owner holds hardware keys")]
    KernelKeysUnavailable,
    #[error("virtual key already in use")]
    VkeyInUse,
    #[error("out of pages")]
    OutOfPages,
    #[error("unknown virtual key")]
    UnknownVkey,
    #[error("page group busy: a thread holds an open domain")]
    GroupBusy,
    #[error("no evictable key: all hardware keys are actively used")]
    NoEvictableKey,
    #[error("mpk_end without a matching mpk_begin")]
    NotBegun,
    #[error("operation not valid on an execute-only group")]
    ExecOnlyGroup,
    #[error("group heap cannot satisfy the request")]
    OutOfSpace,
    #[error("chunk already freed")]
    DoubleFree,
    #[error("unknown chunk handle")]
    UnknownChunk,
    #[error("metadata is read-only to the application")]
    MetadataProtected,
    #[error("manager not initialized")]
    NotInitialized,
}

pub type Result<T> = std::result::Result<T, MpkError>;

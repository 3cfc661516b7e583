use thiserror::Error;

pub const DEFAULT_MAX_TOKENS: u32 = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("no tokens available ({max} frames already in flight)")]
    Underflow { max: u32 },
    #[error("reply without an in-flight frame")]
    Overflow,
}

/// Token accounting for in-flight frames. Sending a frame takes a token;
/// every reply to a frame (guidance, ack or error) gives it back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowControl {
    max_tokens: u32,
    available: u32,
}

impl FlowControl {
    pub fn new(max_tokens: u32) -> Self {
        Self {
            max_tokens,
            available: max_tokens,
        }
    }

    pub fn available(&self) -> u32 {
        self.available
    }

    pub fn max_tokens(&self) -> u32 {
        self.max_tokens
    }

    pub fn in_flight(&self) -> u32 {
        self.max_tokens - self.available
    }

    pub fn sent(&mut self) -> Result<u32, FlowError> {
        if self.available == 0 {
            return Err(FlowError::Underflow { max: self.max_tokens });
        }
        self.available -= 1;
        Ok(self.available)
    }

    pub fn replied(&mut self) -> Result<u32, FlowError> {
        if self.available == self.max_tokens {
            return Err(FlowError::Overflow);
        }
        self.available += 1;
        Ok(self.available)
    }
}

impl Default for FlowControl {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_TOKENS)
    }
}

use serde::{Deserialize, Serialize};

use super::prompt::{render_prompt, PromptKind};
use super::{DecisionContext, DecisionCore, DecisionError, FeedbackItem, PeerFeedback, Phase, Stance};
use crate::agent::{Recommendation, TradeAction};
use crate::debate::Package;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// Anything that can turn a message list into a completion.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, DecisionError>;
}

/// Endpoint settings. The credential itself is never part of the config:
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub api_key_env: String,
    pub max_retries: u32,
    /// Abort on endpoint failure instead of holding.
    pub strict: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            timeout_secs: 60,
            api_key_env: "LTRADE_LLM_API_KEY".into(),
            max_retries: 2,
            strict: false,
        }
    }
}

const SYSTEM: &str = "You are a disciplined equity trader. Follow the reply format exactly.";

/// Decision core backed by a chat-completion model.
pub struct LlmCore {
    config: LlmConfig,
    transport: Box<dyn ChatTransport>,
}

impl std::fmt::Debug for LlmCore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmCore").field("config", &self.config).finish()
    }
}

/// First non-empty line as an action, remainder as rationale.
fn parse_reply(reply: &str) -> Option<(TradeAction, String)> {
    let mut lines = reply.lines().skip_while(|l| l.trim().is_empty());
    let action = TradeAction::from_phrase(lines.next()?)?;
    let rest: Vec<&str> = lines.collect();
    Some((action, rest.join("\n").trim().to_string()))
}

impl LlmCore {
    pub fn new(config: LlmConfig, transport: Box<dyn ChatTransport>) -> Self {
        Self { config, transport }
    }

    #[cfg(feature = "remote")]
    pub fn from_env(config: LlmConfig) -> Result<Self, DecisionError> {
        let transport = HttpChatTransport::from_env(&config)?;
        Ok(Self::new(config, Box::new(transport)))
    }

    fn ask(&self, prompt: String) -> Result<Option<String>, DecisionError> {
        let messages = [ChatMessage::new("system", SYSTEM), ChatMessage::new("user", prompt)];
        match self.transport.complete(&messages) {
            Ok(reply) => Ok(Some(reply)),
            Err(e) if self.config.strict => Err(e),
            Err(e) => {
                tracing::warn!(error = %e, "chat endpoint failed, holding");
                Ok(None)
            }
        }
    }

    fn recommend(&self, prompt: String) -> Result<Recommendation, DecisionError> {
        let Some(reply) = self.ask(prompt)? else {
            return Ok(Recommendation::new(TradeAction::Hold, "core-unavailable"));
        };
        Ok(match parse_reply(&reply) {
            Some((action, rationale)) => Recommendation::new(action, rationale),
            None => Recommendation::new(TradeAction::Hold, "parse-failure"),
        })
    }
}

impl DecisionCore for LlmCore {
    fn name(&self) -> &str {
        "llm"
    }

    fn decide(&self, ctx: &DecisionContext) -> Result<Recommendation, DecisionError> {
        let kind = match ctx.phase {
            Phase::Train => PromptKind::Train,
            Phase::Test => PromptKind::Test,
        };
        self.recommend(render_prompt(ctx, kind))
    }

    fn feedback(
        &self,
        ctx: &DecisionContext,
        own: TradeAction,
        peer: &Package,
    ) -> Result<PeerFeedback, DecisionError> {
        let mut view = ctx.clone();
        view.peers = vec![peer.clone()];
        let reply = self.ask(render_prompt(&view, PromptKind::Debate))?;
        let (action, text) = reply
            .as_deref()
            .and_then(parse_reply)
            .unwrap_or((own, "no feedback".to_string()));
        let stance = if action.direction() == peer.action.direction() {
            Stance::Agree
        } else {
            Stance::Disagree
        };
        Ok(PeerFeedback {
            stance,
            sender_action: action,
            text,
        })
    }

    fn revise(
        &self,
        ctx: &DecisionContext,
        original: &Recommendation,
        received: &[FeedbackItem],
    ) -> Result<Recommendation, DecisionError> {
        let mut view = ctx.clone();
        view.feedback.extend(received.iter().cloned());
        let rec = self.recommend(render_prompt(&view, PromptKind::Debate))?;
        if rec.rationale == "core-unavailable" {
            return Ok(original.clone());
        }
        Ok(rec)
    }
}

#[cfg(feature = "remote")]
pub use remote::HttpChatTransport;

#[cfg(feature = "remote")]
mod remote {
    use super::{ChatMessage, ChatTransport, DecisionError, LlmConfig};
    use serde::{Deserialize, Serialize};
    use std::time::Duration;

    #[derive(Serialize)]
    struct Request<'a> {
        model: &'a str,
        messages: &'a [ChatMessage],
    }

    #[derive(Deserialize)]
    struct Response {
        choices: Vec<Choice>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: Reply,
    }

    #[derive(Deserialize)]
    struct Reply {
        content: String,
    }

    pub struct HttpChatTransport {
        endpoint: String,
        model: String,
        api_key: String,
        max_retries: u32,
        agent: ureq::Agent,
    }

    impl HttpChatTransport {
        /// Reads the credential from the environment variable named in `config`.
        pub fn from_env(config: &LlmConfig) -> Result<Self, DecisionError> {
            let api_key = std::env::var(&config.api_key_env).map_err(|_| {
                DecisionError::CoreUnavailable(format!(
                    "environment variable {} is not set",
                    config.api_key_env
                ))
            })?;
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
                .build()
                .into();
            Ok(Self {
                endpoint: config.endpoint.clone(),
                model: config.model.clone(),
                api_key,
                max_retries: config.max_retries,
                agent,
            })
        }

        fn once(&self, messages: &[ChatMessage]) -> Result<String, String> {
            let mut response: Response = self
                .agent
                .post(&self.endpoint)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(Request {
                    model: &self.model,
                    messages,
                })
                .map_err(|e| e.to_string())?
                .body_mut()
                .read_json()
                .map_err(|e| e.to_string())?;
            if response.choices.is_empty() {
                return Err("response has no choices".into());
            }
            Ok(response.choices.swap_remove(0).message.content)
        }
    }

    impl ChatTransport for HttpChatTransport {
        fn complete(&self, messages: &[ChatMessage]) -> Result<String, DecisionError> {
            let mut last = String::new();
            for attempt in 0..=self.max_retries {
                match self.once(messages) {
                    Ok(text) => return Ok(text),
                    Err(e) => {
                        tracing::debug!(attempt, error = %e, "chat completion failed");
                        last = e;
                    }
                }
                if attempt < self.max_retries {
                    std::thread::sleep(Duration::from_millis(250 << attempt));
                }
            }
            Err(DecisionError::CoreUnavailable(last))
        }
    }
}

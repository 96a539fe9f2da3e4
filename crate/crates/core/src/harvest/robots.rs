//! Minimal robots.txt evaluation: user-agent groups, Allow/Disallow prefix
//! rules, longest match wins, Allow wins ties.

#[derive(Debug, Clone, PartialEq, Eq)]
enum RuleKind {
    Allow,
    Disallow,
}

#[derive(Debug, Clone)]
struct Rule {
    kind: RuleKind,
    prefix: String,
}

#[derive(Debug, Clone, Default)]
pub struct RobotsRules {
    rules: Vec<Rule>,
}

impl RobotsRules {
    /// Parse the rule groups applying to `agent` (falling back to `*`).
    pub fn parse(text: &str, agent: &str) -> Self {
        let agent_lower = agent.to_lowercase();
        let mut for_agent: Vec<Rule> = Vec::new();
        let mut for_any: Vec<Rule> = Vec::new();

        let mut current_agents: Vec<String> = Vec::new();
        let mut in_group_body = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((field, value)) = line.split_once(':') else {
                continue;
            };
            let field = field.trim().to_lowercase();
            let value = value.trim();
            match field.as_str() {
                "user-agent" => {
                    if in_group_body {
                        current_agents.clear();
                        in_group_body = false;
                    }
                    current_agents.push(value.to_lowercase());
                }
                "allow" | "disallow" => {
                    in_group_body = true;
                    // an empty Disallow means "everything allowed"
                    if value.is_empty() {
                        continue;
                    }
                    let rule = Rule {
                        kind: if field == "allow" {
                            RuleKind::Allow
                        } else {
                            RuleKind::Disallow
                        },
                        prefix: value.to_owned(),
                    };
                    let matches_agent = current_agents
                        .iter()
                        .any(|a| a != "*" && agent_lower.contains(a.as_str()));
                    let matches_any = current_agents.iter().any(|a| a == "*");
                    if matches_agent {
                        for_agent.push(rule);
                    } else if matches_any {
                        for_any.push(rule);
                    }
                }
                _ => {}
            }
        }

        RobotsRules {
            rules: if for_agent.is_empty() { for_any } else { for_agent },
        }
    }

    pub fn is_allowed(&self, path: &str) -> bool {
        let mut best_len = 0usize;
        let mut allowed = true;
        for rule in &self.rules {
            if path.starts_with(&rule.prefix) {
                let len = rule.prefix.len();
                let wins = len > best_len
                    || (len == best_len && rule.kind == RuleKind::Allow && !allowed);
                if wins {
                    best_len = len;
                    allowed = rule.kind == RuleKind::Allow;
                }
            }
        }
        allowed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample
User-agent: *
Disallow: /private/
Allow: /private/stats
Disallow: /tmp

User-agent: special-bot
Disallow: /
";

    #[test]
    fn prefix_rules_apply() {
        let rules = RobotsRules::parse(SAMPLE, "generic-fetcher/1.0");
        assert!(rules.is_allowed("/public/page"));
        assert!(!rules.is_allowed("/private/page"));
        assert!(rules.is_allowed("/private/stats/2023"));
        assert!(!rules.is_allowed("/tmp/x"));
    }

    #[test]
    fn specific_agent_group_wins() {
        let rules = RobotsRules::parse(SAMPLE, "special-bot/2.0");
        assert!(!rules.is_allowed("/anything"));
    }

    #[test]
    fn empty_rules_allow_everything() {
        let rules = RobotsRules::parse("", "bot");
        assert!(rules.is_allowed("/a/b"));
    }
}

pub mod dataset;
pub mod explorer;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod refine;
pub mod report_store;
pub mod sandbox;
pub mod snippets;
pub mod taint;
pub mod validator;

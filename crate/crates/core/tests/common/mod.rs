pub mod engine_oracle;

# Resources Package
# Dataset ingestion and synthetic data generation

# Models Package
# Autoencoder, scorers and their binary storage

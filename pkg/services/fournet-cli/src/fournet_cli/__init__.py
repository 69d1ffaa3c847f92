"""Command-line front end for the FourNet pipeline"""

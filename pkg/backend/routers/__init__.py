"""API routers module"""

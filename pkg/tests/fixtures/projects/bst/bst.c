#include <stdlib.h>
#include "bst.h"

struct node *create_node(int value)
{
    struct node *n = malloc(sizeof *n);
    if (n == NULL)
        return NULL;
    n->value = value;
    n->left = NULL;
    n->right = NULL;
    return n;
}

struct node *insert(struct node *root, int value)
{
    if (root==NULL)
        return create_node(value);
    if (value < root->value)
        root->left = insert(root->left, value);
    else if (value > root->value)
        root->right = insert(root->right, value);
    return root;
}

struct node *find_min(struct node *root)
{
    if (root == NULL)
        return NULL;
    while (root->left != NULL)
        root = root->left;
    return root;
}

struct node *search(struct node *root, int value)
{
    if (root == NULL || root->value == value)
        return root;
    if (value < root->value)
        return search(root->left, value);
    return search(root->right, value);
}

int height(struct node *root)
{
    if (root == NULL)
        return 0;
    int lh = height(root->left);
    int rh = height(root->right);
    return (lh > rh ? lh : rh) + 1;
}

int count_nodes(struct node *root)
{
    if (root == NULL)
        return 0;
    return 1 + count_nodes(root->left) + count_nodes(root->right);
}

struct node *delete_node(struct node *root, int value)
{
    if (root == NULL)
        return NULL;
    if (value < root->value) {
        root->left = delete_node(root->left, value);
    } else if (value > root->value) {
        root->right = delete_node(root->right, value);
    } else {
        if (root->left == NULL) {
            struct node *right = root->right;
            free(root);
            return right;
        }
        if (root->right == NULL) {
            struct node *left = root->left;
            free(root);
            return left;
        }
        struct node *succ = find_min(root->right);
        root->value = succ->value;
        root->right = delete_node(root->right, succ->value);
    }
    return root;
}

void free_tree(struct node *root)
{
    if (root == NULL)
        return;
    free_tree(root->left);
    free_tree(root->right);
    free(root);
}
